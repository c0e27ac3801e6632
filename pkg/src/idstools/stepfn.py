"""Right-continuous step functions: counting functions, IDS curves, spectral shifts.

A :class:`StepFunction` is stored as strictly increasing breakpoints
``t_1 < ... < t_k`` and values ``v_0, ..., v_k`` with ``f = v_0`` on
``(-inf, t_1)`` and ``f = v_i`` on ``[t_i, t_{i+1})``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

GENERAL_TOL = 1e-12


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _is_integral(values: np.ndarray) -> bool:
    return bool(np.all(np.isfinite(values)) and np.all(values == np.round(values)))


def _prune(bp: np.ndarray, vals: np.ndarray, tol: float | None) -> tuple[np.ndarray, np.ndarray]:
    if tol is None:
        tol = 0.0 if _is_integral(vals) else GENERAL_TOL
    if bp.size == 0:
        return bp, vals
    keep = np.abs(np.diff(vals)) > tol
    return bp[keep], np.concatenate([vals[:1], vals[1:][keep]])


@dataclass(frozen=True, eq=False)
class StepFunction:
    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        bp = np.array(self.breakpoints, dtype=float).reshape(-1)
        vals = np.array(self.values, dtype=float).reshape(-1)
        if vals.size != bp.size + 1:
            raise ValueError("need exactly one more value than breakpoints")
        if not np.all(np.isfinite(bp)):
            raise ValueError("breakpoints must be finite")
        if bp.size > 1 and not np.all(np.diff(bp) > 0):
            raise ValueError("breakpoints must be strictly increasing")
        bp, vals = _prune(bp, vals, None)
        bp.setflags(write=False)
        vals.setflags(write=False)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)

    # -- constructors -------------------------------------------------
    @classmethod
    def zero(cls) -> "StepFunction":
        return cls(np.empty(0), np.zeros(1))

    @classmethod
    def constant(cls, value: float) -> "StepFunction":
        return cls(np.empty(0), np.array([float(value)]))

    @classmethod
    def unit_jump(cls, at: float, height: float = 1.0) -> "StepFunction":
        return cls(np.array([float(at)]), np.array([0.0, float(height)]))

    @classmethod
    def from_points(cls, locations, weights=None) -> "StepFunction":
        """Distribution function of the point masses ``sum_i w_i delta_{x_i}``."""
        x = np.asarray(locations, dtype=float).reshape(-1)
        if weights is None:
            w = np.ones_like(x)
        else:
            w = np.broadcast_to(np.asarray(weights, dtype=float), x.shape)
        if x.size == 0:
            return cls.zero()
        if not np.all(np.isfinite(x)):
            raise ValueError("point locations must be finite")
        order = np.argsort(x, kind="stable")
        x, w = x[order], w[order]
        uniq, start = np.unique(x, return_index=True)
        mass = np.add.reduceat(w, start)
        return cls(uniq, np.concatenate([[0.0], np.cumsum(mass)]))

    # -- evaluation ---------------------------------------------------
    def __call__(self, lam):
        idx = np.searchsorted(self.breakpoints, lam, side="right")
        out = self.values[idx]
        return float(out) if np.ndim(out) == 0 else out

    def left_limit(self, lam):
        idx = np.searchsorted(self.breakpoints, lam, side="left")
        out = self.values[idx]
        return float(out) if np.ndim(out) == 0 else out

    @property
    def n_breaks(self) -> int:
        return int(self.breakpoints.size)

    @property
    def is_monotone(self) -> bool:
        return bool(np.all(np.diff(self.values) >= 0))

    def restrict(self, a: float, b: float) -> "StepFunction":
        """Equal to ``self`` on ``[a, b]``; breakpoints outside are dropped."""
        if not a <= b:
            raise ValueError("empty window")
        lo = np.searchsorted(self.breakpoints, a, side="left")
        hi = np.searchsorted(self.breakpoints, b, side="right")
        return StepFunction(self.breakpoints[lo:hi], self.values[lo:hi + 1])

    def scaled(self, c: float) -> "StepFunction":
        return StepFunction(self.breakpoints, c * self.values)

    def __add__(self, other: "StepFunction") -> "StepFunction":
        return combine(1.0, self, 1.0, other)

    def __sub__(self, other: "StepFunction") -> "StepFunction":
        return combine(1.0, self, -1.0, other)

    def __eq__(self, other) -> bool:
        if not isinstance(other, StepFunction):
            return NotImplemented
        return np.array_equal(self.breakpoints, other.breakpoints) and np.array_equal(
            self.values, other.values
        )

    __hash__ = None

    def __repr__(self) -> str:
        return f"StepFunction(n_breaks={self.n_breaks}, v0={self.values[0]!r}, v_end={self.values[-1]!r})"

    # -- serialization ------------------------------------------------
    def to_csv(self) -> str:
        lines = ["lambda,value", f"-inf,{_fmt(self.values[0])}"]
        lines += [f"{_fmt(t)},{_fmt(v)}" for t, v in zip(self.breakpoints, self.values[1:])]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "StepFunction":
        rows = [ln.strip() for ln in text.strip().splitlines()]
        if not rows or rows[0] != "lambda,value":
            raise ValueError("missing 'lambda,value' header")
        first = rows[1].split(",")
        if first[0] != "-inf":
            raise ValueError("second row must be '-inf,v0'")
        bp = [float(r.split(",")[0]) for r in rows[2:]]
        vals = [float(first[1])] + [float(r.split(",")[1]) for r in rows[2:]]
        return cls(np.array(bp), np.array(vals))


class Jump(NamedTuple):
    location: float
    height: float


def counting_from_sorted(eigs: Sequence[float]) -> StepFunction:
    """``f(lam) = #{i : eigs[i] <= lam}``."""
    x = np.asarray(eigs, dtype=float).reshape(-1)
    if x.size > 1 and np.any(np.diff(x) < 0):
        raise ValueError("eigenvalues must be sorted in non-decreasing order")
    return StepFunction.from_points(x)


def _merged(f: StepFunction, g: StepFunction):
    t = np.union1d(f.breakpoints, g.breakpoints)
    fv = np.concatenate([[f.values[0]], f(t)]) if t.size else f.values[:1].copy()
    gv = np.concatenate([[g.values[0]], g(t)]) if t.size else g.values[:1].copy()
    return t, fv, gv


def combine(a: float, f: StepFunction, b: float, g: StepFunction) -> StepFunction:
    """Pointwise ``a*f + b*g``."""
    t, fv, gv = _merged(f, g)
    return StepFunction(t, a * fv + b * gv)


def _pieces(t: np.ndarray, window):
    """Piece bounds ``[lo_i, hi_i)`` of the partition cut by ``t``, clipped to ``window``."""
    lo = np.concatenate([[-math.inf], t])
    hi = np.concatenate([t, [math.inf]])
    if window is None:
        return lo, hi, np.ones(lo.size, dtype=bool)
    a, b = window
    live = (lo <= b) & (hi > a)
    return np.maximum(lo, a), np.minimum(hi, b), live


def sup_distance(f: StepFunction, g: StepFunction, window: tuple[float, float] | None = None) -> float:
    """``sup |f - g|`` over the real line or over the closed window ``[a, b]``."""
    t, fv, gv = _merged(f, g)
    _, _, live = _pieces(t, window)
    diff = np.abs(fv - gv)[live]
    return float(diff.max()) if diff.size else 0.0


def _weight_sup(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    # smallest |lam| on [lo, hi)
    nearest = np.where(lo > 0, lo, np.where(hi <= 0, -hi, 0.0))
    return 1.0 / np.sqrt(nearest + 1.0)


def weighted_sup_distance(
    f: StepFunction, g: StepFunction, window: tuple[float, float] | None = None
) -> float:
    """``sup |f - g| / sqrt(|lam| + 1)``, exact over the piece partition."""
    t, fv, gv = _merged(f, g)
    lo, hi, live = _pieces(t, window)
    diff = np.abs(fv - gv)
    with np.errstate(invalid="ignore"):
        w = _weight_sup(lo, hi)
    vals = (diff * w)[live & (diff > 0)]
    return float(vals.max()) if vals.size else 0.0


def jumps(f: StepFunction, threshold: float, merge_tol: float = 0.0) -> list[Jump]:
    """Discontinuities of height at least ``threshold``.

    Breakpoints closer than ``merge_tol`` are pooled into one jump, located at
    the member with the largest individual height.
    """
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    t = f.breakpoints
    if t.size == 0:
        return []
    h = np.diff(f.values)
    groups = np.concatenate([[0], np.cumsum(np.diff(t) > merge_tol)]) if merge_tol > 0 else np.arange(t.size)
    out = []
    start = 0
    for end in np.flatnonzero(np.diff(np.append(groups, groups[-1] + 1))) + 1:
        seg = slice(start, end)
        height = float(h[seg].sum())
        if height >= threshold:
            loc = float(t[seg][np.argmax(h[seg])])
            out.append(Jump(loc, height))
        start = end
    return out


def sum_functions(fs: Iterable[StepFunction]) -> StepFunction:
    """Sum of many step functions in one merge."""
    fs = list(fs)
    if not fs:
        return StepFunction.zero()
    locs = np.concatenate([f.breakpoints for f in fs])
    jumps_ = np.concatenate([np.diff(f.values) for f in fs])
    base = sum(float(f.values[0]) for f in fs)
    out = StepFunction.from_points(locs, jumps_)
    return StepFunction(out.breakpoints, out.values + base)
