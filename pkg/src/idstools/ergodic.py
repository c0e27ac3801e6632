"""IDS estimators and diagnostics.

Combinatorial curves are normalized per vertex (``|Q|``), quantum curves per
edge (``|E_Q| = d |Q|``). The two conventions are never mixed.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from . import comb_op, qgraph
from .comb_op import CombModelSpec
from .errors import NumericalError, ResourceCapError
from .lattice import Box, Colouring, ConstantColouring, ExplicitColouring, FrequencyTable, derive_seed, origin_cube
from .qgraph import BoundaryModel, LengthModel
from .stepfn import Jump, StepFunction, jumps, sum_functions, sup_distance, weighted_sup_distance

QUANTUM_WINDOW = (0.0, 100.0)
MC_DENSE_CAP = 3000


# ---------------------------------------------------------------------------
# model handles


@dataclass(frozen=True)
class CombinatorialModel:
    spec: CombModelSpec
    colouring: Colouring

    kind = "combinatorial"

    @property
    def d(self) -> int:
        return self.colouring.d

    @property
    def stochastic(self) -> bool:
        return self.colouring.stochastic

    def with_seed(self, seed: int) -> "CombinatorialModel":
        return CombinatorialModel(self.spec, self.colouring.with_seed(seed))

    def normalization(self, q: Box) -> int:
        return q.volume

    def default_window(self) -> tuple[float, float]:
        r = 2 * self.d * self.spec.hopping_range
        if self.spec.kind == "periodic_block":
            # Gershgorin radius over all colours
            rad = 0.0
            for delta, blk in self.spec.blocks.items():
                w = np.abs(blk).sum(axis=2).max()
                rad += w if not any(delta) else 2 * w
            return (-rad - 1.0, rad + 1.0)
        return (-r - 1.0, r + 1.0 + self.spec.max_potential)

    def describe(self) -> dict[str, Any]:
        return {"kind": self.kind, "operator": self.spec.describe(), "colouring": self.colouring.describe()}


@dataclass(frozen=True)
class QuantumModel:
    bc: BoundaryModel
    lengths: LengthModel | None = None
    mesh: int = 100

    kind = "quantum"

    @property
    def d(self) -> int:
        return self.bc.d

    @property
    def stochastic(self) -> bool:
        return self.bc.colouring.stochastic or (self.lengths is not None and self.lengths.colouring.stochastic)

    def with_seed(self, seed: int) -> "QuantumModel":
        # independent streams for boundary conditions and lengths
        lengths = None if self.lengths is None else self.lengths.with_seed(derive_seed(seed, 1 << 20))
        return QuantumModel(self.bc.with_seed(seed), lengths, self.mesh)

    def normalization(self, q: Box) -> int:
        return self.d * q.volume

    def default_window(self) -> tuple[float, float]:
        return QUANTUM_WINDOW

    @property
    def l_plus(self) -> float:
        return 1.0 if self.lengths is None else self.lengths.l_plus

    def region(self, q: Box) -> qgraph.MetricRegion:
        return qgraph.build_region(self.bc, q, self.lengths)

    def describe(self) -> dict[str, Any]:
        out = {"kind": self.kind, "mesh": self.mesh, "bc_model": self.bc.kind,
               "tags": [t.name for t in self.bc.tags], "bc_colouring": self.bc.colouring.describe()}
        if self.lengths is not None:
            out["lengths"] = {"values": [list(v) for v in self.lengths.values],
                              "colouring": self.lengths.colouring.describe()}
        return out


Model = CombinatorialModel | QuantumModel


def _realize(model: Model, seed: int | None) -> Model:
    if model.stochastic:
        if seed is None:
            raise ValueError("a seed is required for a stochastic model")
        return model.with_seed(seed)
    return model


def _window(model: Model, window) -> tuple[float, float]:
    a, b = model.default_window() if window is None else (float(window[0]), float(window[1]))
    if not a < b:
        raise ValueError("window must satisfy a < b")
    return a, b


def _normalized(f: StepFunction, norm: float) -> StepFunction:
    # divide rather than multiply by 1/norm: integer counts stay exact
    return StepFunction(f.breakpoints, f.values / norm)


def _counting(model: Model, q: Box, lam_max: float) -> StepFunction:
    """Unnormalized counting function of the restriction to ``q`` (exact up to ``lam_max``)."""
    if isinstance(model, CombinatorialModel):
        return comb_op.restricted_counting(model.spec, model.colouring, q)
    return qgraph.qg_counting(model.region(q), model.mesh, lam_max)


# ---------------------------------------------------------------------------
# curves


@dataclass(frozen=True, eq=False)
class IdsCurve:
    fn: StepFunction
    estimator: str
    volume: int
    window: tuple[float, float]
    seed: int | None = None
    model: dict = field(default_factory=dict)

    def __call__(self, lam):
        return self.fn(lam)

    def to_csv(self) -> str:
        return self.fn.to_csv()


def finite_volume_ids(model: Model, seed: int | None, side: int, window=None, anchor=None) -> IdsCurve:
    """Normalized counting function of the restriction to ``C_side``, truncated to the window."""
    if side < 2:
        raise ValueError("side must be at least 2")
    a, b = _window(model, window)
    m = _realize(model, seed)
    q = origin_cube(model.d, side) if anchor is None else Box(tuple(anchor), (side,) * model.d)
    n = _counting(m, q, b)
    fn = _normalized(n, m.normalization(q)).restrict(a, b)
    return IdsCurve(fn, "finite_volume", q.volume, (a, b), seed, model.describe())


def pattern_estimator(model: Model, freq: FrequencyTable, window=None) -> IdsCurve:
    """``sum_P nu_P n_P / |C_M|`` with ``n_P`` the counting function of the operator built from ``P`` alone."""
    a, b = _window(model, window)
    if freq.d != model.d:
        raise ValueError("frequency table and model have different dimensions")
    if isinstance(model, QuantumModel) and model.lengths is not None and not isinstance(
        model.lengths.colouring, ConstantColouring
    ):
        raise ValueError("pattern estimator supports a single colouring; lengths must be constant")
    q = origin_cube(freq.d, freq.side)
    n_sym = model.colouring.n_symbols if isinstance(model, CombinatorialModel) else model.bc.colouring.n_symbols
    parts = []
    for p, nu in freq.patterns():
        arr = p.array()
        if arr.max(initial=0) >= n_sym:
            raise ValueError("pattern uses symbols outside the model alphabet")
        c = ExplicitColouring(q, arr)
        if isinstance(model, CombinatorialModel):
            local = CombinatorialModel(model.spec, c)
        else:
            local = QuantumModel(BoundaryModel(c, model.bc.kind, model.bc.tags), model.lengths, model.mesh)
        parts.append(_counting(local, q, b).scaled(nu))
    norm = model.normalization(q)
    fn = _normalized(sum_functions(parts), norm).restrict(a, b)
    return IdsCurve(fn, f"pattern-M{freq.side}", freq.window_volume, (a, b), None, model.describe())


# ---------------------------------------------------------------------------
# localized trace


def _comb_local_weights(model: CombinatorialModel, big: Box, cell: Box):
    m = comb_op.assemble(model.spec, model.colouring, big, storage="dense")
    comb_op._check_finite(m)
    w, v = np.linalg.eigh(m.dense)
    k = model.spec.fiber
    inside = np.all((big.sites() >= cell.anchor) & (big.sites() < np.add(cell.anchor, cell.shape)), axis=1)
    rows = np.repeat(inside, k)
    return w, np.sum(v[rows] ** 2, axis=0)


def _component_pairs(a, b, lam_min, lam_max):
    """Eigenpairs of a pencil block in ``(lam_min, lam_max]`` (B-orthonormal vectors)."""
    n = a.shape[0]
    if n <= MC_DENSE_CAP:
        return sla.eigh(a.toarray(), b.toarray(), subset_by_value=(lam_min, lam_max))
    ab, bb, perm = qgraph._banded_pair(a, b, np.arange(n))
    shift = np.array([lam_min, lam_max]) + np.maximum(1.0, abs(lam_max)) * np.array([1e-10, 1e-10])
    neg, broke = qgraph._banded.negative_inertia(ab, shift, bb)
    if broke.any():
        raise NumericalError("pivot breakdown while counting eigenvalues")
    k = int(neg[1] - neg[0])
    if k == 0:
        return np.empty(0), np.empty((n, 0))
    if k >= n - 1:
        raise ResourceCapError(f"{k} eigenpairs of an order-{n} block; refine the window or mesh")
    w, v = spla.eigsh(a.tocsc(), k=k, M=b.tocsc(), sigma=lam_min, which="LM")
    keep = (w > lam_min) & (w <= lam_max)
    if keep.sum() != k:
        raise NumericalError("shift-invert Lanczos missed eigenvalues")
    return w[keep], v[:, keep]


def _quantum_local_weights(model: QuantumModel, big: Box, cell: Box, lam_max: float):
    r = model.region(big)
    pencil = qgraph.assemble_fem(r, model.mesh)
    in_cell = np.all((r.init >= cell.anchor) & (r.init < np.add(cell.anchor, cell.shape)), axis=1)
    bc = pencil.mass_on(in_cell)
    touched = np.flatnonzero(bc.getnnz(axis=1))
    lo = min(0.0, float(r.potential.min())) - 1.0
    ws, ms = [], []
    for idx in qgraph._components(pencil):
        if not np.isin(idx, touched).any():
            continue
        a = pencil.A[idx][:, idx]
        b = pencil.B[idx][:, idx]
        w, v = _component_pairs(a, b, lo, lam_max)
        c = bc[idx][:, idx]
        ws.append(w)
        ms.append(np.einsum("ik,ik->k", v, c @ v))
    if not ws:
        return np.empty(0), np.empty(0)
    return np.concatenate(ws), np.concatenate(ms)


def shubin_pastur_mc(model: Model, cell: int, r_buf: int, samples: int, seed: int | None = None,
                     window=None) -> IdsCurve:
    """Average over samples of ``Tr[chi_C P_lam] / |C|`` computed on the buffered cube.

    ``C = C_cell`` at the origin; the operator lives on ``C`` grown by ``r_buf``
    on every side. Quantum curves use the B-weighted mass of each eigenfunction
    on the edges starting in ``C``, divided by ``d |C|``.
    """
    if samples < 1:
        raise ValueError("samples must be positive")
    if cell < 1 or r_buf < 0:
        raise ValueError("cell must be positive and r_buf non-negative")
    need = 2 * model.spec.hopping_range if isinstance(model, CombinatorialModel) else 2
    if r_buf < need:
        raise ValueError(f"r_buf must be at least {need}")
    if model.stochastic and seed is None:
        raise ValueError("a seed is required for a stochastic model")
    a, b = _window(model, window)
    d = model.d
    cbox = origin_cube(d, cell)
    big = Box((-r_buf,) * d, (cell + 2 * r_buf,) * d)
    if isinstance(model, CombinatorialModel) and big.volume * model.spec.fiber > comb_op.DENSE_CAP * 4:
        raise ResourceCapError(f"buffered cube of volume {big.volume} is too large")
    parts = []
    for i in range(samples):
        m = model.with_seed(derive_seed(seed, i)) if model.stochastic else model
        if isinstance(m, CombinatorialModel):
            w, mass = _comb_local_weights(m, big, cbox)
        else:
            w, mass = _quantum_local_weights(m, big, cbox, b)
        parts.append(StepFunction.from_points(w, mass))
    norm = model.normalization(cbox) * samples
    fn = _normalized(sum_functions(parts), norm).restrict(a, b)
    return IdsCurve(fn, f"shubin-pastur-n{samples}", cbox.volume, (a, b), seed, model.describe())


# ---------------------------------------------------------------------------
# convergence and jumps


@dataclass(frozen=True)
class ConvergenceRow:
    side: int
    sup_distance: float
    weighted_distance: float | None
    seconds: float


@dataclass(frozen=True, eq=False)
class ConvergenceReport:
    rows: list[ConvergenceRow]
    curves: list[IdsCurve]
    window: tuple[float, float]

    @property
    def sides(self) -> list[int]:
        return [r.side for r in self.rows]

    @property
    def distances(self) -> list[float]:
        return [r.sup_distance for r in self.rows]

    @property
    def weighted(self) -> list[float | None]:
        return [r.weighted_distance for r in self.rows]

    def to_csv(self) -> str:
        # wall times stay out so that reruns are byte-identical
        lines = ["side,sup_distance,weighted_distance"]
        for r in self.rows:
            wd = "" if r.weighted_distance is None else format(r.weighted_distance, ".17g")
            lines.append(f"{r.side},{r.sup_distance:.17g},{wd}")
        return "\n".join(lines) + "\n"


def convergence_report(model: Model, sides: Sequence[int], seed: int | None, window=None,
                       weighted: bool = False) -> ConvergenceReport:
    """Distances of each finite-volume curve to the one of the largest side.

    Sup distances are taken on the window; weighted distances use the weight
    ``1/sqrt(|lam|+1)`` on ``(-inf, b]``.
    """
    sides = [int(s) for s in sides]
    if len(sides) < 3:
        raise ValueError("need at least three sides")
    if any(s2 < s1 for s1, s2 in zip(sides, sides[1:])):
        raise ValueError("sides must be non-decreasing")
    a, b = _window(model, window)
    curves, times = [], []
    for s in sides:
        t0 = time.perf_counter()
        curves.append(finite_volume_ids(model, seed, s, (a, b)))
        times.append(time.perf_counter() - t0)
    ref = curves[-1].fn
    rows = []
    for s, c, t in zip(sides, curves, times):
        wd = weighted_sup_distance(c.fn, ref, (-math.inf, b)) if weighted else None
        rows.append(ConvergenceRow(s, sup_distance(c.fn, ref, (a, b)), wd, t))
    return ConvergenceReport(rows, curves, (a, b))


def detect_jumps(curve: IdsCurve | StepFunction, min_height: float, merge_tol: float = 1e-9) -> list[Jump]:
    fn = curve.fn if isinstance(curve, IdsCurve) else curve
    return jumps(fn, min_height, merge_tol)


def expected_jump_oracle(p: float, model: CombinatorialModel | None = None) -> float:
    """Jump at 0 of the d=1 percolation IDS: ``(1-p) + p(1-p)/(1+p)``.

    Deleted sites give ``1-p``; a path of ``n`` sites has a zero eigenvalue iff
    ``n`` is odd, and ``sum_{n odd} (1-p)^2 p^n = p(1-p)/(1+p)``.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    if model is not None:
        ok = (isinstance(model, CombinatorialModel) and model.d == 1
              and model.spec.kind == "site_percolation"
              and all(v == 0 or math.isinf(v) for v in model.spec.potentials))
        if not ok:
            raise ValueError("oracle needs the d=1 site percolation model with zero potential")
    return (1.0 - p) + p * (1.0 - p) / (1.0 + p)


# ---------------------------------------------------------------------------
# almost additivity


@dataclass(frozen=True)
class AdditivityReport:
    discrepancy: float
    constant: float
    interface: int
    ok: bool

    @property
    def bound(self) -> float:
        return self.constant * self.interface


def additivity_constant(model: Model) -> float:
    if isinstance(model, CombinatorialModel):
        return 2.0 * model.spec.fiber * model.spec.hopping_range
    # a vertex of degree 2d changing to Dirichlet has rank at most 2d (Neumann); Kirchhoff costs 1
    return float(max(4, 2 * model.d))


def almost_additivity_check(model: Model, box: Box, axis: int, seed: int | None = None,
                            at: int | None = None, lam_max: float | None = None) -> AdditivityReport:
    """``sup |n_Q - n_Q1 - n_Q2|`` for ``Q`` cut across ``axis`` against ``C_b * interface``."""
    m = _realize(model, seed)
    _, b = _window(model, None if lam_max is None else (-math.inf, lam_max))
    q1, q2 = box.split(axis, at)
    interface = box.volume // box.shape[axis]
    n = _counting(m, box, b)
    n12 = _counting(m, q1, b) + _counting(m, q2, b)
    window = None if isinstance(m, CombinatorialModel) else (-math.inf, b)
    disc = sup_distance(n, n12, window)
    const = additivity_constant(m)
    return AdditivityReport(disc, const, interface, disc <= const * interface)
