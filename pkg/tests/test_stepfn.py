import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from idstools.stepfn import (
    Jump, StepFunction, combine, counting_from_sorted, jumps, sum_functions, sup_distance,
    weighted_sup_distance,
)

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


@st.composite
def step_functions(draw, max_breaks=8):
    bp = sorted(set(draw(st.lists(finite, max_size=max_breaks))))
    vals = draw(st.lists(st.integers(-5, 5), min_size=len(bp) + 1, max_size=len(bp) + 1))
    return StepFunction(np.array(bp), np.array(vals, dtype=float))


def test_counting_examples():
    assert counting_from_sorted([]) == StepFunction.zero()
    f = counting_from_sorted([1, 1, 2])
    assert list(f.breakpoints) == [1, 2] and list(f.values) == [0, 2, 3]
    assert counting_from_sorted(np.sort([3.0, 1.0, 2.0]))(2.5) == 2


def test_counting_rejects_unsorted():
    with pytest.raises(ValueError):
        counting_from_sorted([2, 1])


def test_right_continuity_and_left_limit():
    f = StepFunction.unit_jump(1.0)
    assert f(1.0) == 1 and f.left_limit(1.0) == 0 and f(0.999) == 0


def test_redundant_breakpoints_pruned():
    f = StepFunction(np.array([0.0, 1.0, 2.0]), np.array([0.0, 1.0, 1.0, 2.0]))
    assert list(f.breakpoints) == [0, 2]


def test_combine_examples():
    f = counting_from_sorted([0.5, 1.0, 3.0])
    assert combine(1, f, -1, f) == StepFunction.zero()
    h = StepFunction.unit_jump(0.0)
    assert combine(0.5, h, 0.5, h) == h


def test_sup_distance_examples():
    assert sup_distance(StepFunction.unit_jump(0), StepFunction.unit_jump(1)) == 1
    f = counting_from_sorted([1, 2])
    assert sup_distance(f, f) == 0
    assert sup_distance(f, counting_from_sorted([1, 3])) == 1


def test_sup_distance_window_is_closed():
    f, g = StepFunction.unit_jump(1.0), StepFunction.zero()
    assert sup_distance(f, g, (0.0, 1.0)) == 1
    assert sup_distance(f, g, (0.0, 0.5)) == 0
    assert sup_distance(f, g, (2.0, 3.0)) == 1


def test_weighted_examples():
    z = StepFunction.zero()
    assert weighted_sup_distance(StepFunction.unit_jump(0), z) == 1
    assert weighted_sup_distance(StepFunction.unit_jump(3), z) == pytest.approx(0.5)
    left = StepFunction(np.array([-3.0]), np.array([1.0, 0.0]))
    assert weighted_sup_distance(left, z) == pytest.approx(0.5)
    f = counting_from_sorted([1, 2])
    assert weighted_sup_distance(f, f) == 0


def test_weighted_straddling_piece_uses_zero():
    f = StepFunction(np.array([-2.0, 5.0]), np.array([0.0, 3.0, 0.0]))
    assert weighted_sup_distance(f, StepFunction.zero()) == 3


def test_jumps_examples():
    assert jumps(counting_from_sorted([1, 1, 2]), 1.5) == [Jump(1.0, 2.0)]
    stair = counting_from_sorted(np.arange(100) * 0.01)
    assert jumps(stair, 2) == []


def test_jumps_merge_pools_close_breakpoints():
    f = counting_from_sorted([0.0, 1e-13, 2e-13, 1.0])
    assert jumps(f, 2) == []
    j = jumps(f, 2, merge_tol=1e-9)
    assert len(j) == 1 and j[0].height == 3


def test_csv_roundtrip_exact():
    f = StepFunction(np.array([-1 / 3, 0.1, math.pi]), np.array([0.5, 1 / 7, 2.0, -3e-5]))
    g = StepFunction.from_csv(f.to_csv())
    assert g == f
    assert f.to_csv().splitlines()[:2] == ["lambda,value", "-inf,0.5"]


def test_sum_functions_matches_pairwise():
    fs = [counting_from_sorted([0, 1]), StepFunction.unit_jump(0.5, 2.0), StepFunction.constant(1.0)]
    assert sum_functions(fs) == fs[0] + fs[1] + fs[2]
    assert sum_functions([]) == StepFunction.zero()


@given(st.lists(finite, max_size=30), st.lists(finite, min_size=1, max_size=20))
def test_counting_matches_brute_force(xs, probes):
    f = counting_from_sorted(sorted(xs))
    for lam in probes:
        assert f(lam) == sum(x <= lam for x in xs)


@given(step_functions(), step_functions(), step_functions())
def test_sup_distance_is_a_metric(f, g, h):
    assert sup_distance(f, g) == sup_distance(g, f)
    assert sup_distance(f, h) <= sup_distance(f, g) + sup_distance(g, h) + 1e-12
    assert (sup_distance(f, g) == 0) == (f == g)


@given(step_functions(), step_functions())
def test_weighted_below_sup(f, g):
    assert weighted_sup_distance(f, g) <= sup_distance(f, g) + 1e-15


@given(step_functions(), step_functions(), st.floats(-3, 3), st.floats(-3, 3),
       st.lists(st.floats(-60, 60), min_size=1, max_size=50))
def test_combine_pointwise(f, g, a, b, probes):
    h = combine(a, f, b, g)
    for lam in probes:
        want = a * f(lam) + b * g(lam)
        assert abs(h(lam) - want) <= 1e-12 * max(1.0, abs(want)) + 1e-12


@given(step_functions())
def test_weighted_matches_dense_grid_lower_bound(f):
    # the exact value dominates any sampled value
    lam = np.linspace(-60, 60, 2001)
    sampled = np.max(np.abs(f(lam)) / np.sqrt(np.abs(lam) + 1))
    assert weighted_sup_distance(f, StepFunction.zero()) >= sampled - 1e-12
