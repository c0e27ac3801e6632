import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from idstools.errors import ResourceCapError
from idstools.lattice import Box, ConstantColouring, ExplicitColouring, IidColouring, origin_cube, shift
from idstools.qgraph import (
    BCTag, BoundaryModel, LengthModel, assemble_fem, bit_probs, build_region, dirichlet_counting,
    dirichlet_interval_count, eta_form, fem_count_leq, lagrangian_basis, pencil_eigenvalues, product_lengths,
    qg_counting, secular_cluster_oracle, spectral_shift, ssf_bound,
)
from idstools.stepfn import StepFunction, sum_functions

KIRCH = lambda d: BoundaryModel(ConstantColouring(d, 1, 2))  # noqa: E731
DIRI = lambda d: BoundaryModel(ConstantColouring(d, 0, 2))  # noqa: E731


def _edge_region(lengths, tags):
    """Chain of edges along x_1 with explicit per-vertex tags (interior vertices only matter)."""
    n = len(lengths)
    q = Box((0,), (n,))
    bc = BoundaryModel(ExplicitColouring(q, np.array(tags, dtype=np.uint8)), tags=("D", "N", "K"))
    lm = LengthModel(ExplicitColouring(q, np.arange(n, dtype=np.uint8)), tuple((l,) for l in lengths))
    return build_region(bc, q, lm)


@pytest.mark.parametrize("tag", list(BCTag))
@pytest.mark.parametrize("k", [1, 2, 4])
def test_conditions_are_lagrangian(tag, k):
    basis = lagrangian_basis(tag, k)
    assert basis.shape == (2 * k, k) and np.linalg.matrix_rank(basis) == k
    for i in range(k):
        for j in range(k):
            assert eta_form(basis[:, i], basis[:, j]) == 0


def test_region_examples():
    r = build_region(KIRCH(1), origin_cube(1, 3))
    assert r.n_edges == 3
    assert r.vertices().ravel().tolist() == [0, 1, 2, 3]
    assert r.boundary_vertices().ravel().tolist() == [0, 3]
    assert r.tag_init.tolist() == [BCTag.D, BCTag.K, BCTag.K]
    assert r.tag_term.tolist() == [BCTag.K, BCTag.K, BCTag.D]
    assert build_region(KIRCH(2), origin_cube(2, 3)).n_edges == 18
    rd = build_region(DIRI(2), origin_cube(2, 3))
    assert np.all(rd.tag_init == BCTag.D) and np.all(rd.tag_term == BCTag.D)
    assert r.dump().splitlines()[0] == "0 0 0 1 D K"


def test_edge_and_site_edge_tags():
    # symbol 1 = bit 0 set: edge (x, 0) cut
    q = origin_cube(1, 4)
    edge = BoundaryModel(ExplicitColouring(q, np.array([0, 1, 0, 0])), kind="edge")
    r = build_region(edge, q)
    assert r.tag_init.tolist() == [BCTag.D, BCTag.D, BCTag.K, BCTag.K]
    assert r.tag_term.tolist() == [BCTag.K, BCTag.D, BCTag.K, BCTag.D]
    # site-edge: bit d+j at x cuts the edge arriving at x
    se = BoundaryModel(ExplicitColouring(q, np.array([0, 0, 2, 0])), kind="site_edge")
    r = build_region(se, q)
    assert r.tag_term.tolist() == [BCTag.K, BCTag.D, BCTag.K, BCTag.D]
    assert r.tag_init.tolist() == [BCTag.D, BCTag.K, BCTag.K, BCTag.K]


def test_dirichlet_interval_examples():
    assert dirichlet_interval_count(1, 9) == 0
    assert dirichlet_interval_count(1, 10) == 1
    assert dirichlet_interval_count(2.5, 0) == 0
    with pytest.raises(ValueError):
        dirichlet_interval_count(0, 1)


def test_fem_single_edge_hand_assembly():
    r = build_region(DIRI(1), origin_cube(1, 1))
    p = assemble_fem(r, mesh=2)
    assert p.n == 1
    assert p.A.toarray()[0, 0] == pytest.approx(4.0) and p.B.toarray()[0, 0] == pytest.approx(1 / 3)


def test_fem_all_dirichlet_is_block_diagonal():
    r = build_region(DIRI(2), origin_cube(2, 3))
    p = assemble_fem(r, mesh=10)
    single = assemble_fem(build_region(DIRI(1), origin_cube(1, 1)), mesh=10)
    assert p.n == r.n_edges * single.n
    a = p.A.toarray()
    blk = single.n
    for e in range(r.n_edges):
        s = slice(e * blk, (e + 1) * blk)
        assert np.allclose(a[s, s], single.A.toarray())
        a[s, s] = 0
    assert not a.any()


def test_kirchhoff_chain_equals_long_interval():
    L = 5
    chain = assemble_fem(build_region(KIRCH(1), origin_cube(1, L)), mesh=20)
    q = Box((0,), (1,))
    long = LengthModel(ConstantColouring(1), ((float(L),),))
    single = assemble_fem(build_region(DIRI(1), q, long), mesh=20)
    assert np.allclose(np.sort(pencil_eigenvalues(chain, 1e9)), np.sort(pencil_eigenvalues(single, 1e9)))


def test_empty_region():
    r = build_region(KIRCH(1), origin_cube(1, 2)).subset(np.zeros(2, bool))
    with pytest.raises(ValueError):
        assemble_fem(r)
    assert qg_counting(r) == StepFunction.zero()


def test_dof_cap():
    with pytest.raises(ResourceCapError):
        assemble_fem(build_region(KIRCH(2), origin_cube(2, 10)), mesh=100, dof_cap=1000)


def test_qg_counting_single_edge():
    f = qg_counting(build_region(DIRI(1), origin_cube(1, 1)), mesh=100, lam_max=100)
    lam = np.linspace(0, 100, 2001)
    far = np.min(np.abs(lam[:, None] - (np.arange(1, 4) * np.pi)[None] ** 2), axis=1) > 0.5
    assert np.array_equal(f(lam[far]), dirichlet_interval_count(1, lam[far]))


def test_two_edges_middle_kirchhoff():
    r = build_region(KIRCH(1), origin_cube(1, 2))
    f = qg_counting(r, mesh=100, lam_max=100)
    lam = np.linspace(0, 100, 2001)
    ex = (np.arange(1, 8) * np.pi / 2) ** 2
    far = np.min(np.abs(lam[:, None] - ex[None]), axis=1) > 0.5
    assert np.array_equal(f(lam[far]), dirichlet_interval_count(2, lam[far]))


def test_oracle_examples():
    one = build_region(DIRI(1), origin_cube(1, 1))
    assert np.allclose(secular_cluster_oracle(one, 10), (np.arange(1, 4) * np.pi) ** 2)
    two = build_region(KIRCH(1), origin_cube(1, 2))
    assert np.allclose(secular_cluster_oracle(two, 10), (np.arange(1, 7) * np.pi / 2) ** 2, rtol=1e-10)


def test_star_oracle_agrees_with_fem():
    # centre (1,1) Kirchhoff, three unit edges to Dirichlet tips
    q = Box((0, 0), (3, 3))
    arr = np.zeros((3, 3), dtype=np.uint8)
    arr[1, 1] = 1
    r = build_region(BoundaryModel(ExplicitColouring(q, arr)), q)
    term = r.term()
    touch = np.all(r.init == (1, 1), axis=1) | np.all(term == (1, 1), axis=1)
    keep = touch & ~(np.all(r.init == (0, 1), axis=1))
    star = r.subset(keep)
    assert star.n_edges == 3
    exact = secular_cluster_oracle(star, math.sqrt(100))
    fem = np.sort(pencil_eigenvalues(assemble_fem(star, mesh=200), 100.0 * 1.01))
    fem = fem[: exact.size]
    # one-sided bias with relative size about (kh)^2 / 12
    assert np.all(fem >= exact - 1e-9)
    assert np.all(fem - exact <= exact * exact / (12 * 200**2) * 1.5 + 1e-9)


def test_neumann_end_decouples():
    # one edge with a Neumann interior vertex: mixed D-N intervals give ((k - 1/2) pi)^2
    r = _edge_region([1.0, 1.0], [0, 1])
    ev = secular_cluster_oracle(r, 8)
    want = np.sort(np.concatenate([((np.arange(1, 4) - 0.5) * np.pi) ** 2] * 2))
    assert np.allclose(ev, want)
    fem = pencil_eigenvalues(assemble_fem(r, mesh=100), 70)
    assert np.allclose(fem, want, rtol=1e-3)


def test_spectral_shift_examples():
    r = build_region(DIRI(2), origin_cube(2, 4))
    n = qg_counting(r, 100, 200)
    unit = qg_counting(build_region(DIRI(1), origin_cube(1, 1)), 100, 200)
    # mesh-consistent reference: exact cancellation
    assert spectral_shift(n, 16, 2, 200, reference=unit) == StepFunction.zero()
    # exact reference: zero away from the FEM shift of each (k pi)^2
    xi = spectral_shift(n, 16, 2, 200)
    lam = np.linspace(0, 200, 4001)
    far = np.min(np.abs(lam[:, None] - (np.arange(1, 5) * np.pi)[None] ** 2), axis=1) > 0.5
    assert not np.any(xi(lam[far]))
    nk = qg_counting(build_region(KIRCH(1), origin_cube(1, 6)), 50, 9.0)
    assert spectral_shift(nk, 6, 1, 9.0) == nk


def test_bit_probs_and_products():
    assert sum(bit_probs(4, 0.3)) == pytest.approx(1)
    assert bit_probs(1, 0.25) == (0.75, 0.25)
    assert product_lengths(2, (1, 2)) == ((1, 1), (1, 2), (2, 1), (2, 2))


# -- properties -----------------------------------------------------------

@given(st.integers(0, 2**32), st.integers(1, 2))
def test_all_dirichlet_decoupling_exact(seed, d):
    lm = LengthModel(IidColouring(d, (0.5, 0.5), seed), product_lengths(d, (1.0, 1.2))[:2])
    q = origin_cube(d, 4 if d == 1 else 3)
    r = build_region(DIRI(d), q, lm)
    n = qg_counting(r, 20, 400)
    singles = [qg_counting(build_region(DIRI(1), Box((0,), (1,)), LengthModel(ConstantColouring(1), ((l,),))),
                           20, 400) for l in r.length]
    assert n == sum_functions(singles)


@given(st.integers(0, 2**32), st.lists(st.integers(-20, 20), min_size=2, max_size=2))
def test_shift_invariance(seed, t):
    bc = BoundaryModel(IidColouring.bernoulli(2, 0.6, seed))
    q = origin_cube(2, 4)
    a = qg_counting(build_region(bc, q), 10, 100)
    b = qg_counting(build_region(BoundaryModel(shift(bc.colouring, t)), q.shifted(t)), 10, 100)
    assert a == b


@given(st.integers(0, 2**32))
def test_mesh_monotone_and_below_oracle(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 5))
    tags = rng.choice([0, 1, 2], size=n).tolist()
    r = _edge_region(rng.choice([1.0, 1.5], size=n).tolist(), tags)
    exact = secular_cluster_oracle(r, 6.0)
    lam = np.linspace(0.1, 35, 60)
    lam = lam[np.min(np.abs(lam[:, None] - exact[None]), axis=1) > 1e-3] if exact.size else lam
    prev = np.zeros(lam.size, dtype=int)
    for m in (4, 8, 16, 32):
        c = fem_count_leq(assemble_fem(r, m), lam)
        assert np.all(c >= prev)
        assert np.all(c <= (exact[None, :] <= lam[:, None]).sum(axis=1))
        prev = c


@given(st.integers(0, 2**32))
def test_ssf_bound_random_bc(seed):
    bc = BoundaryModel(IidColouring(1, (0.3, 0.3, 0.4), seed), tags=("D", "N", "K"))
    r = build_region(bc, origin_cube(1, 50))
    xi = spectral_shift(qg_counting(r, 20, 100), 50, 1, 100)
    assert np.max(np.abs(xi.restrict(0, 100).values)) / 50 <= ssf_bound(100, 1.0)
