"""Metric graphs over Z^d: vertex conditions, random lengths, FEM eigenvalue counting.

Edges are ``e = (x, j)`` with ``init(e) = x`` and ``term(e) = x + e_j``. For a
box ``Q`` the region holds the ``d |Q|`` edges with ``init(e)`` in ``Q``. Every
edge end carries its own tag so that site, edge and site-edge percolation all
reduce to the same representation.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph

from . import _banded
from .errors import NumericalError, ResourceCapError
from .lattice import Box, Colouring
from .stepfn import StepFunction, combine

DOF_CAP = 2_000_000
ORACLE_MAX_EDGES = 12


class BCTag(enum.IntEnum):
    """Vertex conditions; each is a Lagrangian subspace of (value, derivative) pairs."""

    D = 0  # f = 0
    N = 1  # f' = 0 on every edge end separately
    K = 2  # continuity and vanishing derivative sum

    @classmethod
    def parse(cls, s) -> "BCTag":
        if isinstance(s, BCTag):
            return s
        return {"D": cls.D, "N": cls.N, "K": cls.K}[str(s).upper()[0]]


def lagrangian_basis(tag: BCTag, degree: int) -> np.ndarray:
    """Columns spanning the subspace of ``(f_1..f_k, f'_1..f'_k)`` allowed by ``tag``."""
    k = degree
    if tag is BCTag.D:
        return np.vstack([np.zeros((k, k)), np.eye(k)])
    if tag is BCTag.N:
        return np.vstack([np.eye(k), np.zeros((k, k))])
    vals = np.vstack([np.ones((k, 1)), np.zeros((k, 1))])
    ders = np.zeros((2 * k, k - 1))
    for i in range(k - 1):
        ders[k + i, i] = 1.0
        ders[k + i + 1, i] = -1.0
    return np.hstack([vals, ders])


def eta_form(u: np.ndarray, w: np.ndarray) -> float:
    """``<u', w> - <u, w'>`` for stacked ``(values, derivatives)`` vectors."""
    k = u.size // 2
    return float(u[k:] @ w[:k] - u[:k] @ w[k:])


# ---------------------------------------------------------------------------
# boundary-condition and length models


@dataclass(frozen=True)
class BoundaryModel:
    """How a colouring of the vertices sets the tags of edge ends.

    ``site``: the symbol's payload ``tags[s]`` applies to every end at the vertex.
    ``edge``: symbol bit ``j`` set means edge ``(x, j)`` is Dirichlet at both ends.
    ``site_edge``: bit ``j`` cuts edge ``(x, j)`` at ``x``; bit ``d + j`` cuts edge
    ``(x - e_j, j)`` at ``x``. Unset bits mean Kirchhoff.
    """

    colouring: Colouring
    kind: str = "site"
    tags: tuple[BCTag, ...] = (BCTag.D, BCTag.K)

    def __post_init__(self):
        if self.kind not in ("site", "edge", "site_edge"):
            raise ValueError(f"unknown boundary model {self.kind!r}")
        object.__setattr__(self, "tags", tuple(BCTag.parse(t) for t in self.tags))
        n = self.colouring.n_symbols
        d = self.colouring.d
        if self.kind == "site" and n > len(self.tags):
            raise ValueError("colouring has symbols without a boundary tag")
        if self.kind == "edge" and n > 2**d:
            raise ValueError("edge percolation symbols must lie in {0,1}^d")
        if self.kind == "site_edge" and n > 4**d:
            raise ValueError("site-edge percolation symbols must lie in {0,1}^(2d)")

    @property
    def d(self) -> int:
        return self.colouring.d

    def with_seed(self, seed: int) -> "BoundaryModel":
        return BoundaryModel(self.colouring.with_seed(seed), self.kind, self.tags)

    def end_tags(self, colours: np.ndarray, axis: int) -> tuple[np.ndarray, np.ndarray]:
        """Tags at the init end of ``(x, axis)`` (vertex ``x``) and at the term end (vertex ``x + e_axis``).

        ``colours`` covers the vertex box ``Q`` extended by one layer on the high
        side of every axis; outputs have the shape of ``Q``.
        """
        d = colours.ndim
        here = tuple(slice(0, n - 1) for n in colours.shape)
        there = tuple(slice(1, n) if j == axis else slice(0, n - 1) for j, n in enumerate(colours.shape))
        c0, c1 = colours[here].astype(np.int64), colours[there].astype(np.int64)
        if self.kind == "site":
            lut = np.asarray([int(t) for t in self.tags], dtype=np.uint8)
            return lut[c0], lut[c1]
        if self.kind == "edge":
            cut = ((c0 >> axis) & 1).astype(bool)
            tag = np.where(cut, BCTag.D, BCTag.K).astype(np.uint8)
            return tag, tag.copy()
        cut0 = ((c0 >> axis) & 1).astype(bool)
        cut1 = ((c1 >> (d + axis)) & 1).astype(bool)
        return (np.where(cut0, BCTag.D, BCTag.K).astype(np.uint8),
                np.where(cut1, BCTag.D, BCTag.K).astype(np.uint8))


@dataclass(frozen=True)
class LengthModel:
    """Edge lengths: symbol ``s`` at ``x`` assigns ``values[s][j]`` to edge ``(x, j)``."""

    colouring: Colouring
    values: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        vals = tuple(tuple(float(v) for v in row) for row in self.values)
        if any(len(row) != self.colouring.d for row in vals):
            raise ValueError("each length payload must have d entries")
        if any(v <= 0 or not math.isfinite(v) for row in vals for v in row):
            raise ValueError("lengths must be positive and finite")
        if self.colouring.n_symbols > len(vals):
            raise ValueError("colouring has symbols without a length vector")
        object.__setattr__(self, "values", vals)

    @property
    def l_minus(self) -> float:
        return min(v for row in self.values for v in row)

    @property
    def l_plus(self) -> float:
        return max(v for row in self.values for v in row)

    def with_seed(self, seed: int) -> "LengthModel":
        return LengthModel(self.colouring.with_seed(seed), self.values)


def product_lengths(d: int, choices: Sequence[float]) -> tuple[tuple[float, ...], ...]:
    """All of ``A~^d`` in the order matching a uniform product colouring."""
    import itertools

    return tuple(tuple(t) for t in itertools.product(choices, repeat=d))


def bit_probs(nbits: int, p_one: float) -> tuple[float, ...]:
    """Law of ``nbits`` independent bits, each 1 with probability ``p_one``, as a symbol vector."""
    out = []
    for s in range(2**nbits):
        ones = bin(s).count("1")
        out.append(p_one**ones * (1 - p_one) ** (nbits - ones))
    return tuple(out)


# ---------------------------------------------------------------------------
# regions


def _inner(q: Box, v: np.ndarray) -> np.ndarray:
    # v inner  <=>  v in q and v - e_j in q for all j
    off = np.atleast_2d(v) - np.asarray(q.anchor)
    return np.all((off >= 1) & (off <= np.asarray(q.shape) - 1), axis=1)


@dataclass(frozen=True, eq=False)
class MetricRegion:
    box: Box
    init: np.ndarray       # (E, d) int
    axis: np.ndarray       # (E,) int
    length: np.ndarray     # (E,)
    potential: np.ndarray  # (E,)
    tag_init: np.ndarray   # (E,) BCTag values
    tag_term: np.ndarray   # (E,)

    @property
    def d(self) -> int:
        return self.box.d

    @property
    def n_edges(self) -> int:
        return int(self.axis.size)

    def term(self) -> np.ndarray:
        t = self.init.copy()
        t[np.arange(self.n_edges), self.axis] += 1
        return t

    def is_inner(self, v: np.ndarray) -> np.ndarray:
        """Vertices all of whose ``2d`` lattice edges belong to the region."""
        return _inner(self.box, v)

    def vertices(self) -> np.ndarray:
        v = np.unique(np.vstack([self.init, self.term()]), axis=0) if self.n_edges else np.empty((0, self.d), int)
        return v

    def inner_vertices(self) -> np.ndarray:
        v = self.vertices()
        return v[self.is_inner(v)]

    def boundary_vertices(self) -> np.ndarray:
        v = self.vertices()
        return v[~self.is_inner(v)]

    def subset(self, mask: np.ndarray) -> "MetricRegion":
        return MetricRegion(self.box, self.init[mask], self.axis[mask], self.length[mask],
                            self.potential[mask], self.tag_init[mask], self.tag_term[mask])

    def dump(self) -> str:
        """``edge init_vertex axis length bc_init bc_term`` lines."""
        lines = []
        for k in range(self.n_edges):
            x = ",".join(str(int(v)) for v in self.init[k])
            lines.append(
                f"{k} {x} {int(self.axis[k])} {self.length[k]:.17g} "
                f"{BCTag(int(self.tag_init[k])).name} {BCTag(int(self.tag_term[k])).name}"
            )
        return "\n".join(lines) + ("\n" if lines else "")


def build_region(
    bc: BoundaryModel,
    q: Box,
    lengths: LengthModel | None = None,
    potentials: LengthModel | None = None,
) -> MetricRegion:
    """Region over ``q``; ends at boundary vertices are forced Dirichlet.

    ``potentials`` reuses the length-model layout to give a constant potential
    per edge (default 0).
    """
    d = q.d
    if bc.d != d or (lengths is not None and lengths.colouring.d != d):
        raise ValueError("colouring dimensions do not match the box")
    # only inner vertices, all of which lie in q, are ever read
    colours = np.zeros(tuple(n + 1 for n in q.shape), dtype=np.uint8)
    colours[tuple(slice(0, n) for n in q.shape)] = bc.colouring.colours(q)
    sites = q.sites()
    per_axis = []
    for j in range(d):
        t0, t1 = bc.end_tags(colours, j)
        t0, t1 = t0.ravel(order="F").copy(), t1.ravel(order="F").copy()
        term = sites.copy()
        term[:, j] += 1
        t0[~_inner(q, sites)] = BCTag.D
        t1[~_inner(q, term)] = BCTag.D
        per_axis.append((t0, t1))
    if lengths is None:
        length = np.ones((len(sites), d))
    else:
        length = np.asarray(lengths.values, dtype=float)[lengths.colouring.colours(q).ravel(order="F")]
    if potentials is None:
        pot = np.zeros((len(sites), d))
    else:
        pot = np.asarray(potentials.values, dtype=float)[potentials.colouring.colours(q).ravel(order="F")]
    # edge order: site-major, then axis
    E = len(sites) * d
    init = np.repeat(sites, d, axis=0)
    axis = np.tile(np.arange(d), len(sites))
    tag_init = np.stack([pa[0] for pa in per_axis], axis=1).reshape(E)
    tag_term = np.stack([pa[1] for pa in per_axis], axis=1).reshape(E)
    return MetricRegion(q, init, axis, length.reshape(E), pot.reshape(E), tag_init, tag_term)


def dirichlet_interval_count(l: float, lam) -> int | np.ndarray:
    """Eigenvalues ``<= lam`` of the Dirichlet Laplacian on ``[0, l]``: ``floor(l sqrt(lam) / pi)``."""
    if l <= 0:
        raise ValueError("length must be positive")
    val = np.floor(l / math.pi * np.sqrt(np.maximum(np.asarray(lam, dtype=float), 0.0)))
    return int(val) if np.ndim(val) == 0 else val.astype(np.int64)


def dirichlet_counting(l: float, lam_max: float) -> StepFunction:
    """:func:`dirichlet_interval_count` as a step function with jumps ``(k pi / l)^2 <= lam_max``."""
    k = np.arange(1, int(l * math.sqrt(max(lam_max, 0.0)) / math.pi) + 1)
    return StepFunction.from_points((k * math.pi / l) ** 2)


# ---------------------------------------------------------------------------
# finite elements


@dataclass(frozen=True, eq=False)
class FemPencil:
    """Stiffness ``A`` and consistent mass ``B`` (CSR), with element bookkeeping."""

    A: sp.csr_matrix
    B: sp.csr_matrix
    mesh: int
    elem_edge: np.ndarray
    elem_nodes: np.ndarray  # (n_el, 2), -1 for pinned nodes
    elem_h: np.ndarray

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def mass_on(self, edge_mask: np.ndarray) -> sp.csr_matrix:
        """Mass matrix assembled from the elements of the selected edges only."""
        sel = edge_mask[self.elem_edge]
        return _assemble_elements(self.elem_nodes[sel], self.elem_h[sel], np.zeros(int(sel.sum())), self.n)[1]


def _assemble_elements(nodes: np.ndarray, h: np.ndarray, pot: np.ndarray, n: int):
    ke = np.array([[1.0, -1.0], [-1.0, 1.0]])
    me = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
    rows, cols, a_vals, b_vals = [], [], [], []
    for r in range(2):
        for c in range(2):
            ok = (nodes[:, r] >= 0) & (nodes[:, c] >= 0)
            rows.append(nodes[ok, r])
            cols.append(nodes[ok, c])
            mass = me[r, c] * h[ok]
            a_vals.append(ke[r, c] / h[ok] + pot[ok] * mass)
            b_vals.append(mass)
    rows, cols = np.concatenate(rows), np.concatenate(cols)
    A = sp.coo_matrix((np.concatenate(a_vals), (rows, cols)), shape=(n, n)).tocsr()
    B = sp.coo_matrix((np.concatenate(b_vals), (rows, cols)), shape=(n, n)).tocsr()
    A.sum_duplicates()
    B.sum_duplicates()
    return A, B


def elements_per_edge(length: np.ndarray, mesh: int) -> np.ndarray:
    return np.maximum(2, np.round(mesh * np.asarray(length)).astype(np.int64))


def assemble_fem(r: MetricRegion, mesh: int = 100, dof_cap: int = DOF_CAP) -> FemPencil:
    """Linear elements, ``max(2, round(mesh * l_e))`` per edge.

    Kirchhoff ends at a vertex share one node; each Neumann end gets its own
    node; Dirichlet ends are pinned (no node).
    """
    if mesh < 2:
        raise ValueError("mesh density must be at least 2")
    if r.n_edges == 0:
        raise ValueError("empty region")
    n_el = elements_per_edge(r.length, mesh)
    n_total = int(n_el.sum())
    if n_total > dof_cap:
        raise ResourceCapError(f"about {n_total} FEM unknowns exceed cap {dof_cap}")
    term = r.term()
    vertex_dof: dict[tuple, int] = {}
    counter = 0

    def end_node(tag, v) -> int:
        nonlocal counter
        if tag == BCTag.D:
            return -1
        if tag == BCTag.K:
            key = tuple(int(c) for c in v)
            if key in vertex_dof:
                return vertex_dof[key]
            vertex_dof[key] = counter
        counter += 1
        return counter - 1

    node_lists = []
    for e in range(r.n_edges):
        nodes = np.empty(n_el[e] + 1, dtype=np.int64)
        nodes[0] = end_node(r.tag_init[e], r.init[e])
        nodes[1:-1] = np.arange(counter, counter + n_el[e] - 1)
        counter += n_el[e] - 1
        nodes[-1] = end_node(r.tag_term[e], term[e])
        node_lists.append(nodes)
    elem_edge = np.repeat(np.arange(r.n_edges), n_el)
    elem_nodes = np.concatenate([np.stack([nd[:-1], nd[1:]], axis=1) for nd in node_lists])
    elem_h = np.repeat(r.length / n_el, n_el)
    pot = np.repeat(r.potential, n_el)
    A, B = _assemble_elements(elem_nodes, elem_h, pot, counter)
    return FemPencil(A, B, mesh, elem_edge, elem_nodes, elem_h)


def _components(pencil: FemPencil) -> list[np.ndarray]:
    pattern = (abs(pencil.A) + abs(pencil.B)).tocsr()
    n_comp, labels = csgraph.connected_components(pattern, directed=False)
    order = np.argsort(labels, kind="stable")
    bounds = np.searchsorted(labels[order], np.arange(n_comp + 1))
    return [order[bounds[i] : bounds[i + 1]] for i in range(n_comp)]


def _banded_pair(A: sp.csr_matrix, B: sp.csr_matrix, idx: np.ndarray):
    a = A[idx][:, idx]
    b = B[idx][:, idx]
    perm = csgraph.reverse_cuthill_mckee((abs(a) + abs(b)).tocsr(), symmetric_mode=True)
    a = a[perm][:, perm]
    b = b[perm][:, perm]
    ab = _banded.band_from_sparse(a)
    bb = _banded.band_from_sparse(b, ab.shape[0] - 1)
    return ab, bb, perm


def pencil_eigenvalues(pencil: FemPencil, lam_max: float, lam_min: float = -1.0) -> np.ndarray:
    """Generalized eigenvalues in ``(lam_min, lam_max]`` with multiplicity, component by component.

    Identical components (same banded matrices) are solved once.
    """
    cache: dict[bytes, np.ndarray] = {}
    out = []
    for idx in _components(pencil):
        ab, bb, _ = _banded_pair(pencil.A, pencil.B, idx)
        key = ab.tobytes() + b"|" + bb.tobytes() + bytes(str(ab.shape), "ascii")
        if key not in cache:
            cache[key] = _banded.generalized_band_eigh(ab, bb, lam_min, lam_max)
        out.append(cache[key])
    return np.sort(np.concatenate(out)) if out else np.empty(0)


def qg_counting(r: MetricRegion, mesh: int = 100, lam_max: float = 100.0) -> StepFunction:
    """Counting function of ``H^Q`` on ``(-inf, lam_max]`` from the FEM pencil."""
    if lam_max <= 0:
        raise ValueError("lam_max must be positive")
    if r.n_edges == 0:
        return StepFunction.zero()
    pencil = assemble_fem(r, mesh)
    lo = min(0.0, float(r.potential.min())) - 1.0
    return StepFunction.from_points(pencil_eigenvalues(pencil, lam_max, lo))


def fem_count_leq(pencil: FemPencil, lam) -> np.ndarray:
    """Eigenvalue counts ``<= lam`` from the inertia of ``A - lam B`` (no eigensolve)."""
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    total = np.zeros(lam.size, dtype=np.int64)
    for idx in _components(pencil):
        ab, bb, _ = _banded_pair(pencil.A, pencil.B, idx)
        shift = lam + np.maximum(1.0, np.abs(lam)) * 1e-10
        neg, broke = _banded.negative_inertia(ab, shift, bb)
        if broke.any():
            raise NumericalError("pivot breakdown in A - lam B")
        total += neg
    return total


# ---------------------------------------------------------------------------
# spectral shift


def spectral_shift(n: StepFunction, q_volume: int, d: int, lam_max: float,
                   reference: StepFunction | None = None) -> StepFunction:
    """``xi = n - d |Q| n_D`` on ``(-inf, lam_max]``.

    ``reference`` replaces the exact unit-interval count ``n_D``, e.g. by its FEM
    counterpart at the same mesh so that discretization errors cancel.
    """
    n_d = dirichlet_counting(1.0, lam_max) if reference is None else reference.restrict(-math.inf, lam_max)
    return combine(1.0, n.restrict(-math.inf, lam_max), -float(d * q_volume), n_d)


def ssf_bound(b: float, l_plus: float) -> float:
    """Per-edge bound ``3 + sqrt(b) l_+ / pi`` on ``|xi| / |E_Q|`` and on ``N`` over ``[0, b]``."""
    return 3.0 + math.sqrt(b) * l_plus / math.pi


# ---------------------------------------------------------------------------
# exact oracle for small clusters


def _end_nodes(r: MetricRegion):
    """Vertex-unknown index per edge end (-1 for Dirichlet)."""
    term = r.term()
    index: dict[tuple, int] = {}
    ends = np.full((r.n_edges, 2), -1, dtype=np.int64)
    for e in range(r.n_edges):
        for side, (tag, v) in enumerate(((r.tag_init[e], r.init[e]), (r.tag_term[e], term[e]))):
            if tag == BCTag.D:
                continue
            key = ("N", e, side) if tag == BCTag.N else tuple(int(c) for c in v)
            ends[e, side] = index.setdefault(key, len(index))
    return ends, len(index)


def secular_count(r: MetricRegion, k: float, ends=None) -> int:
    """Eigenvalues ``<= k^2`` for ``k > 0`` not a Dirichlet resonance ``j pi / l_e``.

    Count = sum over edges of ``floor(k l_e / pi)`` plus the number of positive
    eigenvalues of the vertex matrix mapping vertex values to inward derivative sums.
    """
    if ends is None:
        ends = _end_nodes(r)
    ends, nv = ends
    count = int(np.sum(np.floor(k * r.length / math.pi)))
    if nv == 0:
        return count
    T = np.zeros((nv, nv))
    for e in range(r.n_edges):
        kl = k * r.length[e]
        s, c = math.sin(kl), math.cos(kl)
        u, w = ends[e]
        if u >= 0:
            T[u, u] -= k * c / s
        if w >= 0:
            T[w, w] -= k * c / s
        if u >= 0 and w >= 0:
            T[u, w] += k / s
            T[w, u] += k / s
    return count + int(np.sum(np.linalg.eigvalsh(T) > 0))


def secular_cluster_oracle(r: MetricRegion, k_max: float, resolution: float = 1e-2,
                           tol: float = 1e-12, window: float = 1e-7) -> np.ndarray:
    """Exact eigenvalues ``<= k_max^2`` of a small cluster, with multiplicity.

    The count ``k -> n(k^2)`` is monotone. At each resonance ``j pi / l_e`` the
    multiplicity is the count difference across ``+-window``; every other increase
    on the ``resolution`` grid is bisected down to width ``tol``.
    """
    if r.n_edges > ORACLE_MAX_EDGES:
        raise ValueError(f"oracle handles at most {ORACLE_MAX_EDGES} edges")
    if np.any(r.potential != 0):
        raise ValueError("oracle needs zero edge potentials")
    ends = _end_nodes(r)
    res = sorted({round(j * math.pi / l, 12) for l in set(r.length.tolist())
                  for j in range(1, int(k_max * l / math.pi) + 1)})

    def n(k):
        return 0 if k <= 0 else secular_count(r, k, ends)

    found: list[tuple[float, int]] = []

    def bisect(lo, hi, nlo, nhi):
        if nhi == nlo:
            return
        if hi - lo <= tol * max(1.0, hi):
            found.append((0.5 * (lo + hi), nhi - nlo))
            return
        mid = 0.5 * (lo + hi)
        nmid = n(mid)
        bisect(lo, mid, nlo, nmid)
        bisect(mid, hi, nmid, nhi)

    pts = set(np.arange(resolution, k_max, resolution).tolist()) | {k_max + window}
    pts = {p for p in pts if all(abs(p - k) > window for k in res)}
    pts |= {k - window for k in res} | {k + window for k in res}
    pts = sorted(pts)
    counts = [n(k) for k in pts]
    found_res = []
    lo, nlo = 0.0, 0
    for k, nk in zip(pts, counts):
        kr = k - window
        if any(abs(kr - x) < 1e-12 for x in res):
            # (lo, k) straddles a resonance: lo == kr - window
            if nk > nlo:
                found_res.append((kr, nk - nlo))
        else:
            bisect(lo, k, nlo, nk)
        lo, nlo = k, nk
    found += found_res
    found.sort()
    ks = np.array([k for k, _ in found if k <= k_max * (1 + 1e-12)])
    mult = np.array([m for k, m in found if k <= k_max * (1 + 1e-12)], dtype=int)
    ks[ks < 1e-6] = 0.0
    return np.repeat(ks**2, mult)
