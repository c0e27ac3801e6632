"""Finite-volume restrictions of finite-range colour-invariant operators on Z^d.

Sites of a box are numbered with ``x_1`` fastest; with fiber dimension ``k``
the basis vector ``(x, a)`` has index ``k * site + a``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy import ndimage
from scipy.sparse import csgraph

from . import _banded
from .errors import NumericalError, ResourceCapError
from .lattice import Box, Colouring
from .stepfn import StepFunction, counting_from_sorted

DENSE_CAP = 2000
SIZE_CAP = 4_000_000
KINDS = ("adjacency", "site_percolation", "periodic_block")


def _positive_offset(delta: tuple[int, ...]) -> bool:
    for v in delta:
        if v:
            return v > 0
    return True  # zero offset


@dataclass(frozen=True, eq=False)
class CombModelSpec:
    """Operator description.

    ``site_percolation``: ``potentials[s]`` is the on-site energy of symbol ``s``;
    ``math.inf`` marks a deleted site. Hopping is the Z^d adjacency between
    occupied nearest neighbours.

    ``periodic_block``: ``blocks[delta]`` gives the ``fiber x fiber`` matrix
    ``H[x, x + delta]`` as a function of the colour of ``x`` (an array of shape
    ``(n_symbols, fiber, fiber)`` or a single matrix for every colour). Only
    ``delta = 0`` and "positive" offsets (first non-zero component > 0) are
    given; the transposed blocks are implied.
    """

    kind: str = "adjacency"
    potentials: tuple[float, ...] = ()
    blocks: Mapping[tuple[int, ...], np.ndarray] = field(default_factory=dict)
    hopping_range: int = 1
    fiber: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.hopping_range < 1 or self.fiber < 1:
            raise ValueError("hopping range and fiber dimension must be positive")
        if self.kind == "site_percolation":
            if not self.potentials:
                raise ValueError("site percolation needs a potential alphabet")
            if any(math.isnan(v) or v == -math.inf for v in self.potentials):
                raise ValueError("potentials must lie in R or be +inf")
        if self.kind != "periodic_block" and self.fiber != 1:
            raise ValueError("fiber dimension > 1 needs periodic_block")
        if self.kind == "periodic_block":
            norm = {}
            for delta, blk in self.blocks.items():
                delta = tuple(int(v) for v in delta)
                blk = np.asarray(blk, dtype=float)
                if blk.ndim == 2:
                    blk = blk[None]
                if blk.shape[1:] != (self.fiber, self.fiber):
                    raise ValueError(f"block at {delta} must be {self.fiber}x{self.fiber}")
                if max(abs(v) for v in delta) > self.hopping_range:
                    raise ValueError(f"offset {delta} exceeds the hopping range")
                if not _positive_offset(delta):
                    raise ValueError(f"give offset {tuple(-v for v in delta)} instead of {delta}")
                if not any(delta) and not np.allclose(blk, blk.transpose(0, 2, 1)):
                    raise ValueError("on-site blocks must be symmetric")
                norm[delta] = blk
            if not norm:
                raise ValueError("periodic_block needs at least one block")
            object.__setattr__(self, "blocks", norm)

    @classmethod
    def adjacency(cls) -> "CombModelSpec":
        return cls("adjacency")

    @classmethod
    def percolation(cls, potential: float = 0.0) -> "CombModelSpec":
        """Symbol 0 deleted, symbol 1 occupied with the given on-site energy."""
        return cls("site_percolation", potentials=(math.inf, float(potential)))

    @property
    def max_potential(self) -> float:
        finite = [v for v in self.potentials if math.isfinite(v)]
        return max(finite, default=0.0)

    def describe(self) -> dict:
        out = {"kind": self.kind, "hopping_range": self.hopping_range, "fiber": self.fiber}
        if self.potentials:
            out["potentials"] = [None if math.isinf(v) else v for v in self.potentials]
        return out


@dataclass(frozen=True, eq=False)
class SymMatrix:
    """Real symmetric matrix held densely or as a lower band."""

    n: int
    bandwidth: int
    dense: np.ndarray | None = None
    band: np.ndarray | None = None

    @property
    def storage(self) -> str:
        return "dense" if self.dense is not None else "banded"

    def to_dense(self) -> np.ndarray:
        return self.dense if self.dense is not None else _banded.dense_from_band(self.band)

    def to_band(self) -> np.ndarray:
        return self.band if self.band is not None else _banded.band_from_dense(self.dense, self.bandwidth)

    def trace(self) -> float:
        return float(np.trace(self.dense)) if self.dense is not None else float(self.band[0].sum())

    def dump(self) -> str:
        """``i j value`` lines for the upper triangle, 17 significant digits."""
        a = sp.triu(sp.csr_matrix(self.to_dense())).tocoo()
        order = np.lexsort((a.col, a.row))
        return "".join(f"{a.row[k]} {a.col[k]} {a.data[k]:.17g}\n" for k in order)


# ---------------------------------------------------------------------------
# assembly


def _neighbour_pairs(box: Box, delta: tuple[int, ...]):
    """Flat index pairs ``(i, j)`` with ``site_j = site_i + delta`` inside ``box``."""
    idx = np.arange(box.volume).reshape(box.shape, order="F")
    src = tuple(slice(max(0, -v), s - max(0, v)) for v, s in zip(delta, box.shape))
    dst = tuple(slice(max(0, v), s - max(0, -v)) for v, s in zip(delta, box.shape))
    return idx[src].ravel(order="F"), idx[dst].ravel(order="F"), src


def _unit_offsets(d: int):
    for j in range(d):
        e = [0] * d
        e[j] = 1
        yield tuple(e)


def _entries(model: CombModelSpec, colours: np.ndarray, box: Box):
    """COO triplets of the full symmetric matrix."""
    rows, cols, vals = [], [], []

    def put(i, j, v, sym=True):
        rows.append(i)
        cols.append(j)
        vals.append(v)
        if sym:
            rows.append(j)
            cols.append(i)
            vals.append(v)

    if model.kind == "adjacency":
        for e in _unit_offsets(box.d):
            i, j, _ = _neighbour_pairs(box, e)
            put(i, j, np.ones(i.size))
    elif model.kind == "site_percolation":
        if colours.max(initial=0) >= len(model.potentials):
            raise ValueError("colouring uses symbols beyond the potential alphabet")
        pot = np.asarray(model.potentials, dtype=float)[colours].ravel(order="F")
        occ = np.isfinite(pot)
        diag = np.flatnonzero(occ & (pot != 0))
        put(diag, diag, pot[diag], sym=False)
        for e in _unit_offsets(box.d):
            i, j, _ = _neighbour_pairs(box, e)
            keep = occ[i] & occ[j]
            put(i[keep], j[keep], np.ones(int(keep.sum())))
    else:
        k = model.fiber
        flat = colours.ravel(order="F")
        for delta, blk in model.blocks.items():
            if len(delta) != box.d:
                raise ValueError("block offsets do not match the dimension")
            if blk.shape[0] > 1 and flat.max(initial=0) >= blk.shape[0]:
                raise ValueError("colouring uses symbols without a block")
            i, j, _ = _neighbour_pairs(box, delta)
            if i.size == 0:
                continue
            b = blk[flat[i]] if blk.shape[0] > 1 else np.broadcast_to(blk, (i.size, k, k))
            a_idx, b_idx = np.meshgrid(np.arange(k), np.arange(k), indexing="ij")
            r = (k * i[:, None, None] + a_idx[None]).ravel()
            c = (k * j[:, None, None] + b_idx[None]).ravel()
            put(r, c, b.reshape(-1), sym=any(delta))
    if not rows:
        return np.empty(0, int), np.empty(0, int), np.empty(0)
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)


def assemble(
    model: CombModelSpec,
    c: Colouring,
    q: Box,
    storage: str = "auto",
    size_cap: int = SIZE_CAP,
) -> SymMatrix:
    """Restriction of the operator to ``q`` (couplings leaving ``q`` are dropped)."""
    n = q.volume * model.fiber
    if n > size_cap:
        raise ResourceCapError(f"operator order {n} exceeds cap {size_cap}")
    if model.kind == "site_percolation" and c.n_symbols > len(model.potentials):
        raise ValueError("colouring alphabet larger than the potential alphabet")
    colours = c.colours(q)
    r, col, v = _entries(model, colours, q)
    a = sp.coo_matrix((v, (r, col)), shape=(n, n)).tocsr()
    a.sum_duplicates()
    bw = int(np.max(np.abs(r - col))) if r.size else 0
    if storage == "auto":
        storage = "dense" if n <= DENSE_CAP else "banded"
    if storage == "dense":
        if n > DENSE_CAP * 4:
            raise ResourceCapError(f"dense storage of order {n} refused")
        return SymMatrix(n, bw, dense=a.toarray())
    if storage == "banded":
        return SymMatrix(n, bw, band=_banded.band_from_sparse(a, bw))
    raise ValueError(f"unknown storage {storage!r}")


# ---------------------------------------------------------------------------
# spectra


def _check_finite(m: SymMatrix):
    data = m.dense if m.dense is not None else m.band
    if not np.all(np.isfinite(data)):
        raise NumericalError("matrix has non-finite entries")


def symmetric_eigenvalues(m: SymMatrix) -> np.ndarray:
    """All eigenvalues with multiplicity, ascending."""
    if m.n < 1:
        raise ValueError("empty matrix")
    _check_finite(m)
    try:
        if m.dense is not None:
            return np.linalg.eigvalsh(m.dense)
        return sla.eig_banded(m.band, lower=True, eigvals_only=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(str(exc)) from exc


def _shift_eps(lam: np.ndarray) -> np.ndarray:
    return np.maximum(1.0, np.abs(lam)) * 1e-10


def _dense_negative_count(a: np.ndarray, sigma: float) -> int:
    _, d, _ = sla.ldl(a - sigma * np.eye(a.shape[0]))
    n = d.shape[0]
    neg, i = 0, 0
    while i < n:
        if i + 1 < n and d[i + 1, i] != 0.0:
            neg += int(np.sum(np.linalg.eigvalsh(d[i : i + 2, i : i + 2]) < 0))
            i += 2
        else:
            neg += int(d[i, i] < 0)
            i += 1
    return neg


def count_leq(m: SymMatrix, lam, retries: int = 3):
    """Number of eigenvalues ``<= lam`` from the inertia of ``m - (lam + eps) I``.

    ``eps = max(1, |lam|) * 1e-10``. A near-zero pivot triggers a retry with the
    shift offset doubled, at most ``retries`` times.
    """
    _check_finite(m)
    lam_arr = np.atleast_1d(np.asarray(lam, dtype=float))
    eps = _shift_eps(lam_arr)
    use_band = m.band is not None or m.bandwidth < max(1, m.n // 4)
    if use_band:
        ab = m.to_band()
        out = np.empty(lam_arr.size, dtype=np.int64)
        todo = np.arange(lam_arr.size)
        for _ in range(retries + 1):
            neg, broke = _banded.negative_inertia(ab, lam_arr[todo] + eps[todo])
            out[todo] = neg
            todo = todo[broke]
            if todo.size == 0:
                break
            eps[todo] *= 2
        else:
            raise NumericalError(f"LDL^T breakdown persists near lambda={lam_arr[todo][0]!r}")
    else:
        out = np.array([_dense_negative_count(m.dense, l + e) for l, e in zip(lam_arr, eps)])
    return int(out[0]) if np.ndim(lam) == 0 else out


def counting_function(m: SymMatrix) -> StepFunction:
    return counting_from_sorted(symmetric_eigenvalues(m))


# ---------------------------------------------------------------------------
# percolation clusters


def occupied_mask(model: CombModelSpec, colours: np.ndarray) -> np.ndarray:
    if model.kind != "site_percolation":
        raise ValueError("clusters need a percolation-type payload")
    return np.isfinite(np.asarray(model.potentials, dtype=float)[colours])


def _labels(occ: np.ndarray):
    structure = ndimage.generate_binary_structure(occ.ndim, 1)
    return ndimage.label(occ, structure=structure)


def _cluster_members(labels: np.ndarray, n: int) -> list[np.ndarray]:
    """Flat (Fortran-order) site indices of each label ``1..n``."""
    flat = labels.ravel(order="F")
    order = np.argsort(flat, kind="stable")
    bounds = np.searchsorted(flat[order], np.arange(1, n + 2))
    return [order[bounds[i] : bounds[i + 1]] for i in range(n)]


def clusters(model: CombModelSpec, c: Colouring, q: Box) -> list[np.ndarray]:
    """Connected components of occupied sites in ``q``; each an ``(k, d)`` array of sites."""
    occ = occupied_mask(model, c.colours(q))
    labels, n = _labels(occ)
    sites = q.sites()
    return [sites[m] for m in _cluster_members(labels, n)]


def _cluster_spectrum(model: CombModelSpec, local: np.ndarray, pot: np.ndarray) -> np.ndarray:
    """Eigenvalues of the percolation operator on a single cluster (local coordinates)."""
    shape = tuple(int(v) + 1 for v in local.max(axis=0))
    sub = Box((0,) * local.shape[1], shape)
    n = local.shape[0]
    index = np.full(shape, -1, dtype=np.int64)
    index[tuple(local.T)] = np.arange(n)
    rows, cols, vals = [np.arange(n)], [np.arange(n)], [pot]
    for e in _unit_offsets(sub.d):
        src = tuple(slice(0, s - v) for v, s in zip(e, shape))
        dst = tuple(slice(v, s) for v, s in zip(e, shape))
        i, j = index[src].ravel(), index[dst].ravel()
        keep = (i >= 0) & (j >= 0)
        rows += [i[keep], j[keep]]
        cols += [j[keep], i[keep]]
        vals += [np.ones(int(keep.sum()))] * 2
    a = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    if n <= DENSE_CAP:
        return np.linalg.eigvalsh(a.toarray())
    perm = csgraph.reverse_cuthill_mckee(a.tocsr(), symmetric_mode=True)
    a = a.tocsr()[perm][:, perm]
    return sla.eig_banded(_banded.band_from_sparse(a), lower=True, eigvals_only=True)


def cluster_spectra(model: CombModelSpec, c: Colouring, q: Box):
    """Pooled spectrum of a percolation restriction via its cluster decomposition.

    Returns ``(eigenvalues, multiplicities, n_deleted, n_clusters)``; identical
    cluster shapes (up to translation) are diagonalized once.
    """
    colours = c.colours(q)
    occ = occupied_mask(model, colours)
    pot_all = np.asarray(model.potentials, dtype=float)[colours]
    labels, n = _labels(occ)
    sites = np.stack(np.unravel_index(np.arange(q.volume), q.shape, order="F"), axis=1)
    pot_flat = pot_all.ravel(order="F")
    cache: dict[bytes, tuple[np.ndarray, int]] = {}
    for members in _cluster_members(labels, n):
        loc = sites[members]
        loc = loc - loc.min(axis=0)
        pot = pot_flat[members]
        key = loc.astype(np.int32).tobytes() + b"|" + pot.tobytes()
        hit = cache.get(key)
        if hit is None:
            cache[key] = (_cluster_spectrum(model, loc, pot), 1)
        else:
            cache[key] = (hit[0], hit[1] + 1)
    eigs = [v[0] for v in cache.values()]
    mult = [np.full(v[0].size, v[1]) for v in cache.values()]
    n_deleted = int(q.volume - occ.sum())
    if eigs:
        return np.concatenate(eigs), np.concatenate(mult), n_deleted, n
    return np.empty(0), np.empty(0, dtype=int), n_deleted, n


def percolation_counting(model: CombModelSpec, c: Colouring, q: Box) -> StepFunction:
    """Counting function of the restriction, built cluster by cluster.

    Deleted sites contribute zero rows, i.e. one eigenvalue 0 each.
    """
    eigs, mult, n_deleted, _ = cluster_spectra(model, c, q)
    locs = np.concatenate([eigs, [0.0]])
    weights = np.concatenate([mult.astype(float), [float(n_deleted)]])
    return StepFunction.from_points(locs, weights)


def restricted_counting(model: CombModelSpec, c: Colouring, q: Box) -> StepFunction:
    """Counting function of the restriction to ``q``, by the cheapest exact route."""
    if model.kind == "site_percolation":
        return percolation_counting(model, c, q)
    return counting_function(assemble(model, c, q))
