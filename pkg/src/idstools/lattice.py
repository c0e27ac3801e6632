"""Z^d geometry, colourings, cube patterns and pattern-frequency counting.

Array convention used throughout the package: a colour array over a box is a
numpy array indexed ``arr[x_1 - a_1, ..., x_d - a_d]``, and flattening (pattern
encodings, site numbering) runs with ``x_1`` fastest, i.e. Fortran order.
"""

from __future__ import annotations

import enum
import itertools
import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ResourceCapError

MAX_DIM = 4
DEFAULT_PATTERN_CAP = 10**6

Site = tuple[int, ...]

# ---------------------------------------------------------------------------
# boxes


@dataclass(frozen=True)
class Box:
    """Axis-parallel box ``anchor + prod_j {0, ..., shape_j - 1}``."""

    anchor: Site
    shape: tuple[int, ...]

    def __post_init__(self):
        anchor = tuple(int(a) for a in self.anchor)
        shape = tuple(int(s) for s in self.shape)
        if len(anchor) != len(shape) or not 1 <= len(anchor) <= MAX_DIM:
            raise ValueError(f"dimension must be in 1..{MAX_DIM} and match")
        if min(shape) < 1:
            raise ValueError("box sides must be positive")
        object.__setattr__(self, "anchor", anchor)
        object.__setattr__(self, "shape", shape)

    @property
    def d(self) -> int:
        return len(self.anchor)

    @property
    def volume(self) -> int:
        return math.prod(self.shape)

    def coords(self) -> tuple[np.ndarray, ...]:
        """Absolute coordinate arrays, each of shape ``self.shape``."""
        axes = [np.arange(a, a + s, dtype=np.int64) for a, s in zip(self.anchor, self.shape)]
        return tuple(np.meshgrid(*axes, indexing="ij"))

    def sites(self) -> np.ndarray:
        """``(volume, d)`` array of sites in the package's flat order."""
        return np.stack([c.ravel(order="F") for c in self.coords()], axis=1)

    def index_of(self, x: Sequence[int]) -> int:
        off = [int(xi) - a for xi, a in zip(x, self.anchor)]
        if any(o < 0 or o >= s for o, s in zip(off, self.shape)):
            raise IndexError(f"{tuple(x)} outside {self}")
        return int(np.ravel_multi_index(off, self.shape, order="F"))

    def contains(self, x: Sequence[int]) -> bool:
        return all(a <= xi < a + s for xi, a, s in zip(x, self.anchor, self.shape))

    def shifted(self, t: Sequence[int]) -> "Box":
        return Box(tuple(a + int(ti) for a, ti in zip(self.anchor, t)), self.shape)

    def split(self, axis: int, at: int | None = None) -> tuple["Box", "Box"]:
        """Cut into two boxes along ``axis``; the first has ``at`` layers."""
        n = self.shape[axis]
        at = n // 2 if at is None else at
        if not 0 < at < n:
            raise ValueError("cannot split a box with a single layer on that axis")
        s1 = list(self.shape)
        s1[axis] = at
        s2 = list(self.shape)
        s2[axis] = n - at
        a2 = list(self.anchor)
        a2[axis] += at
        return Box(self.anchor, tuple(s1)), Box(tuple(a2), tuple(s2))


def Cube(anchor: Sequence[int], side: int) -> Box:
    """The cube ``anchor + C_side`` with ``C_M = {0, ..., M-1}^d``."""
    anchor = tuple(anchor)
    return Box(anchor, (int(side),) * len(anchor))


def origin_cube(d: int, side: int) -> Box:
    return Cube((0,) * d, side)


@dataclass(frozen=True)
class VanHoveSequence:
    sides: tuple[int, ...]

    def __post_init__(self):
        sides = tuple(int(s) for s in self.sides)
        if not sides or sides[0] < 1 or any(b <= a for a, b in zip(sides, sides[1:])):
            raise ValueError("sides must be positive and strictly increasing")
        object.__setattr__(self, "sides", sides)

    def boundary_ratio(self, d: int) -> list[float]:
        """``|V^bd| / |C_M|`` bound ``2d/M`` for each side."""
        return [2 * d / m for m in self.sides]


# ---------------------------------------------------------------------------
# counter-based hashing

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix64(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _u64(x) -> np.ndarray:
    return np.asarray(x, dtype=np.int64).astype(np.uint64)


def site_hash(seed: int, coords: Sequence[np.ndarray]) -> np.ndarray:
    """64-bit hash of ``(seed, x)``, elementwise over coordinate arrays."""
    with np.errstate(over="ignore"):
        h = _mix64(np.full(np.shape(coords[0]), np.uint64(seed % 2**64)) + _GOLDEN)
        for j, c in enumerate(coords):
            h = _mix64(h ^ (_u64(c) + _GOLDEN * np.uint64(j + 1)))
    return h


def uniform_at(seed: int, coords: Sequence[np.ndarray]) -> np.ndarray:
    """Uniform variates in ``[0, 1)`` determined by ``(seed, x)`` alone."""
    return (site_hash(seed, coords) >> np.uint64(11)).astype(np.float64) * 2.0**-53


def derive_seed(master: int, index: int) -> int:
    """Child seed for sample ``index`` of a run seeded with ``master``."""
    h = site_hash(master, [np.array([index]), np.array([0x5EED])])
    return int(h[0] >> np.uint64(1))


# ---------------------------------------------------------------------------
# colourings


class Colouring:
    """Map ``Z^d -> {0, ..., n_symbols - 1}``."""

    d: int
    n_symbols: int

    def colours(self, box: Box) -> np.ndarray:
        raise NotImplementedError

    def colour_at(self, x: Sequence[int]) -> int:
        return int(self.colours(Box(tuple(x), (1,) * len(x))).reshape(-1)[0])

    def with_seed(self, seed: int) -> "Colouring":
        """Fresh realisation for stochastic rules; deterministic rules return ``self``."""
        return self

    @property
    def stochastic(self) -> bool:
        return False

    def describe(self) -> dict[str, Any]:
        raise NotImplementedError

    def _check(self, box: Box):
        if box.d != self.d:
            raise ValueError(f"box dimension {box.d} != colouring dimension {self.d}")


@dataclass(frozen=True)
class ConstantColouring(Colouring):
    d: int
    symbol: int = 0
    n_symbols: int = 1

    def __post_init__(self):
        object.__setattr__(self, "n_symbols", max(self.n_symbols, self.symbol + 1))

    def colours(self, box: Box) -> np.ndarray:
        self._check(box)
        return np.full(box.shape, self.symbol, dtype=np.uint8)

    def describe(self):
        return {"rule": "constant", "symbol": self.symbol}


@dataclass(frozen=True)
class PeriodicColouring(Colouring):
    """``(N Z)^d``-periodic colouring given by its cell table on ``C_N``."""

    d: int
    period: int
    cells: tuple[int, ...]
    n_symbols: int = 0

    def __post_init__(self):
        cells = tuple(int(c) for c in np.asarray(self.cells).reshape(-1, order="F"))
        if len(cells) != self.period**self.d:
            raise ValueError("cell table must have period**d entries")
        object.__setattr__(self, "cells", cells)
        if self.n_symbols == 0:
            object.__setattr__(self, "n_symbols", max(cells) + 1)

    @classmethod
    def cell_index(cls, d: int, period: int) -> "PeriodicColouring":
        """Each residue class mod ``period`` gets its own symbol."""
        return cls(d, period, tuple(range(period**d)))

    def colours(self, box: Box) -> np.ndarray:
        self._check(box)
        table = np.asarray(self.cells, dtype=np.uint8).reshape((self.period,) * self.d, order="F")
        idx = tuple(np.mod(c, self.period) for c in box.coords())
        return table[idx]

    def describe(self):
        return {"rule": "periodic", "period": self.period, "cells": list(self.cells)}


def visible_point(x: Sequence[int]) -> bool:
    """True iff ``x`` is the origin or the gcd of its coordinates is 1."""
    g = math.gcd(*(abs(int(v)) for v in x))
    return g in (0, 1)


@dataclass(frozen=True)
class VisiblePointsColouring(Colouring):
    """Characteristic function of the visible points: symbol 1 = visible."""

    d: int
    n_symbols: int = 2

    def colours(self, box: Box) -> np.ndarray:
        self._check(box)
        g = np.abs(box.coords()[0])
        for c in box.coords()[1:]:
            g = np.gcd(g, np.abs(c))
        return (g <= 1).astype(np.uint8)

    def describe(self):
        return {"rule": "visible_points"}


@dataclass(frozen=True)
class IidColouring(Colouring):
    """Independent symbols with law ``probs``; symbol at ``x`` is a pure function of ``(seed, x)``."""

    d: int
    probs: tuple[float, ...]
    seed: int
    n_symbols: int = 0

    def __post_init__(self):
        p = tuple(float(v) for v in self.probs)
        if len(p) < 1 or len(p) > 256 or min(p) < 0 or not math.isclose(sum(p), 1.0, abs_tol=1e-9):
            raise ValueError("probs must be a probability vector with at most 256 entries")
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "n_symbols", len(p))

    @classmethod
    def bernoulli(cls, d: int, p: float, seed: int) -> "IidColouring":
        """Symbol 1 with probability ``p``, symbol 0 otherwise."""
        return cls(d, (1.0 - p, p), seed)

    def colours(self, box: Box) -> np.ndarray:
        self._check(box)
        u = uniform_at(self.seed, box.coords())
        cum = np.cumsum(self.probs)[:-1]
        return np.searchsorted(cum, u, side="right").astype(np.uint8)

    def with_seed(self, seed: int) -> "IidColouring":
        return IidColouring(self.d, self.probs, int(seed))

    @property
    def stochastic(self) -> bool:
        return True

    def describe(self):
        return {"rule": "iid", "probs": list(self.probs), "seed": self.seed}


@dataclass(frozen=True, eq=False)
class ExplicitColouring(Colouring):
    """Finite colour array over a box; queries outside the box are errors."""

    region: Box
    array: np.ndarray
    n_symbols: int = 0
    d: int = field(init=False)

    def __post_init__(self):
        arr = np.array(self.array, dtype=np.uint8)
        if arr.shape != self.region.shape:
            raise ValueError("array shape does not match region")
        arr.setflags(write=False)
        object.__setattr__(self, "array", arr)
        object.__setattr__(self, "d", self.region.d)
        if self.n_symbols == 0:
            object.__setattr__(self, "n_symbols", int(arr.max()) + 1 if arr.size else 1)

    def colours(self, box: Box) -> np.ndarray:
        self._check(box)
        off = [b - r for b, r in zip(box.anchor, self.region.anchor)]
        if any(o < 0 or o + s > rs for o, s, rs in zip(off, box.shape, self.region.shape)):
            raise IndexError(f"{box} is not inside the explicit region {self.region}")
        return self.array[tuple(slice(o, o + s) for o, s in zip(off, box.shape))].copy()

    def describe(self):
        return {"rule": "explicit", "anchor": list(self.region.anchor), "shape": list(self.region.shape)}


@dataclass(frozen=True)
class ShiftedColouring(Colouring):
    """``x -> base(x - t)``."""

    base: Colouring
    t: tuple[int, ...]

    @property
    def d(self):
        return self.base.d

    @property
    def n_symbols(self):
        return self.base.n_symbols

    def colours(self, box: Box) -> np.ndarray:
        return self.base.colours(box.shifted([-v for v in self.t]))

    def with_seed(self, seed: int) -> "ShiftedColouring":
        return ShiftedColouring(self.base.with_seed(seed), self.t)

    @property
    def stochastic(self) -> bool:
        return self.base.stochastic

    def describe(self):
        return {"rule": "shifted", "t": list(self.t), "base": self.base.describe()}


def shift(c: Colouring, t: Sequence[int]) -> Colouring:
    return ShiftedColouring(c, tuple(int(v) for v in t))


def colour_at(c: Colouring, x: Sequence[int]) -> int:
    return c.colour_at(x)


@dataclass(frozen=True)
class Alphabet:
    """Per-symbol payloads: potentials, boundary-condition tags or edge-length vectors."""

    payload: tuple

    def __post_init__(self):
        payload = tuple(self.payload)
        if not payload:
            raise ValueError("alphabet must be non-empty")
        kinds = {type(p) for p in payload}
        if len(kinds) > 1 and not kinds <= {int, float}:
            raise ValueError("payload kind must be uniform across symbols")
        object.__setattr__(self, "payload", payload)

    def __len__(self):
        return len(self.payload)

    def __getitem__(self, s):
        return self.payload[s]


# ---------------------------------------------------------------------------
# patterns


class GroupChoice(str, enum.Enum):
    TRANSLATIONS = "translations"
    FULL = "full"


def point_group(d: int) -> list[tuple[tuple[int, ...], tuple[bool, ...]]]:
    """The ``2^d d!`` signed permutations, as (axis permutation, flips)."""
    return [
        (perm, flips)
        for perm in itertools.permutations(range(d))
        for flips in itertools.product((False, True), repeat=d)
    ]


@dataclass(frozen=True)
class Pattern:
    side: int
    d: int
    colours: bytes

    def __post_init__(self):
        if len(self.colours) != self.side**self.d:
            raise ValueError("pattern length must be side**d")

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "Pattern":
        arr = np.asarray(arr, dtype=np.uint8)
        if len(set(arr.shape)) != 1:
            raise ValueError("patterns are cube supported")
        return cls(arr.shape[0], arr.ndim, arr.tobytes(order="F"))

    @classmethod
    def from_symbols(cls, symbols: Sequence[int], d: int = 1) -> "Pattern":
        side = round(len(symbols) ** (1 / d))
        return cls(side, d, bytes(symbols))

    def array(self) -> np.ndarray:
        return np.frombuffer(self.colours, dtype=np.uint8).reshape((self.side,) * self.d, order="F")

    @property
    def key(self) -> bytes:
        return self.colours


def _transform(arr: np.ndarray, perm, flips) -> np.ndarray:
    out = arr.transpose(perm)
    return out[tuple(slice(None, None, -1) if f else slice(None) for f in flips)]


def orbit(p: Pattern, g: GroupChoice = GroupChoice.TRANSLATIONS) -> set[bytes]:
    if GroupChoice(g) is GroupChoice.TRANSLATIONS:
        return {p.colours}
    arr = p.array()
    return {_transform(arr, perm, fl).tobytes(order="F") for perm, fl in point_group(p.d)}


def canonicalize(p: Pattern, g: GroupChoice = GroupChoice.TRANSLATIONS) -> Pattern:
    """Representative of the equivalence class of ``p``: the orbit's lexicographic minimum."""
    return Pattern(p.side, p.d, min(orbit(p, g)))


def restrict(c: Colouring, q: Box) -> Pattern:
    if len(set(q.shape)) != 1:
        raise ValueError("restriction to a pattern needs a cube")
    return Pattern.from_array(c.colours(q))


def _window_counts(arr: np.ndarray, side: int) -> Counter:
    """Counts of the encodings of all fully contained ``side``-windows."""
    d = arr.ndim
    if any(n < side for n in arr.shape):
        return Counter()
    w = sliding_window_view(arr, (side,) * d)
    # window axes reversed so that C-order flattening equals the F-order encoding
    w = w.transpose(list(range(d)) + list(range(2 * d - 1, d - 1, -1)))
    rows = np.ascontiguousarray(w).reshape(-1, side**d)
    uniq, counts = np.unique(rows, axis=0, return_counts=True)
    return Counter({bytes(r): int(n) for r, n in zip(uniq, counts)})


def count_occurrences(p: Pattern, big: Pattern, g: GroupChoice = GroupChoice.TRANSLATIONS) -> int:
    """Number of anchors whose ``p.side``-window inside ``big`` is equivalent to ``p``."""
    if p.d != big.d:
        raise ValueError("dimension mismatch")
    if p.side > big.side:
        return 0
    counts = _window_counts(big.array(), p.side)
    return sum(counts.get(k, 0) for k in orbit(p, g))


@dataclass(frozen=True, eq=False)
class FrequencyTable:
    side: int
    d: int
    window_volume: int
    counts: Mapping[bytes, int]
    group: GroupChoice = GroupChoice.TRANSLATIONS

    def frequency(self, key: bytes | Pattern) -> float:
        if isinstance(key, Pattern):
            key = canonicalize(key, self.group).key
        return self.counts.get(key, 0) / self.window_volume

    def frequencies(self) -> dict[bytes, float]:
        return {k: n / self.window_volume for k, n in self.counts.items()}

    def patterns(self) -> Iterable[tuple[Pattern, float]]:
        for k in sorted(self.counts):
            yield Pattern(self.side, self.d, k), self.counts[k] / self.window_volume

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def __len__(self) -> int:
        return len(self.counts)

    def to_lines(self) -> list[str]:
        return [f"{k.hex()},{self.counts[k]}" for k in sorted(self.counts)]

    @classmethod
    def from_lines(cls, lines: Iterable[str], side: int, d: int, window_volume: int,
                   group: GroupChoice = GroupChoice.TRANSLATIONS) -> "FrequencyTable":
        counts = {}
        for ln in lines:
            ln = ln.strip()
            if ln:
                k, n = ln.split(",")
                counts[bytes.fromhex(k)] = int(n)
        return cls(side, d, window_volume, counts, GroupChoice(group))


def estimate_frequencies(
    c: Colouring,
    window: Box,
    side: int,
    g: GroupChoice = GroupChoice.TRANSLATIONS,
    cap: int = DEFAULT_PATTERN_CAP,
    workers: int = 1,
    chunks: int | None = None,
) -> FrequencyTable:
    """Occurrence counts of the canonical ``side``-patterns inside ``window``.

    Anchors are split into slabs along the last axis; slab counts are merged by
    addition, so the table does not depend on ``workers`` or ``chunks``.
    """
    g = GroupChoice(g)
    if side < 1 or any(side > s for s in window.shape):
        raise ValueError("pattern side must lie in 1..window side")
    arr = c.colours(window)
    n_anchor = window.shape[-1] - side + 1
    chunks = max(1, min(n_anchor, chunks or workers))
    bounds = np.linspace(0, n_anchor, chunks + 1).astype(int)

    def slab(i):
        lo, hi = bounds[i], bounds[i + 1]
        return _window_counts(arr[..., lo:hi + side - 1], side) if hi > lo else Counter()

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(slab, range(chunks)))
    else:
        parts = [slab(i) for i in range(chunks)]
    raw: Counter = Counter()
    for part in parts:
        raw.update(part)
        if len(raw) > cap:
            raise ResourceCapError(f"more than {cap} distinct patterns of side {side}")
    if g is GroupChoice.FULL:
        merged: Counter = Counter()
        for k, n in raw.items():
            merged[canonicalize(Pattern(side, window.d, k), g).key] += n
        raw = merged
    return FrequencyTable(side, window.d, window.volume, dict(raw), g)
