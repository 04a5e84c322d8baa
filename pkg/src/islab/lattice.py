"""Finite boxes of Z^d, boundary rules and spin configurations."""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

_INT64_MAX = np.iinfo(np.int64).max


class ContainmentError(ValueError):
    """A site or sub-box lies outside the box it is interpreted against."""


class BoundaryRule(str, enum.Enum):
    ABSORBING = "absorbing"
    PERIODIC = "periodic"

    @classmethod
    def parse(cls, value: "BoundaryRule | str") -> "BoundaryRule":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown boundary rule {value!r}; expected 'absorbing' or 'periodic'") from None


@dataclass(frozen=True)
class Box:
    """Axis-aligned box ``[lo_0, hi_0] x ... x [lo_{d-1}, hi_{d-1}]`` (inclusive corners).

    Sites are indexed internally by their row-major offset, last axis fastest.
    """

    lo: tuple[int, ...]
    hi: tuple[int, ...]

    def __post_init__(self):
        lo = tuple(int(v) for v in self.lo)
        hi = tuple(int(v) for v in self.hi)
        if len(lo) == 0 or len(lo) != len(hi):
            raise ValueError("lower and upper corners must be non-empty and of equal length")
        if any(a > b for a, b in zip(lo, hi)):
            raise ValueError(f"empty box: lo={lo} hi={hi}")
        volume = 1
        for a, b in zip(lo, hi):
            volume *= b - a + 1
            if volume > _INT64_MAX:
                raise OverflowError("box volume does not fit in a 64-bit integer")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def centered(cls, half_width: int, d: int = 1) -> "Box":
        return cls((-half_width,) * d, (half_width,) * d)

    @classmethod
    def from_json(cls, obj: dict) -> tuple["Box", BoundaryRule]:
        box = cls(tuple(obj["lo"]), tuple(obj["hi"]))
        if "d" in obj and int(obj["d"]) != box.d:
            raise ValueError(f"declared d={obj['d']} does not match corners of length {box.d}")
        return box, BoundaryRule.parse(obj.get("boundary", "absorbing"))

    def to_json(self, rule: BoundaryRule | str = BoundaryRule.ABSORBING) -> dict:
        return {"d": self.d, "lo": list(self.lo), "hi": list(self.hi),
                "boundary": BoundaryRule.parse(rule).value}

    @property
    def d(self) -> int:
        return len(self.lo)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(b - a + 1 for a, b in zip(self.lo, self.hi))

    @property
    def volume(self) -> int:
        return int(np.prod(self.shape, dtype=np.int64))

    def contains(self, x: Sequence[int]) -> bool:
        return len(x) == self.d and all(a <= v <= b for v, a, b in zip(x, self.lo, self.hi))

    def contains_box(self, other: "Box") -> bool:
        return other.d == self.d and all(
            a <= c and d_ <= b for a, b, c, d_ in zip(self.lo, self.hi, other.lo, other.hi))

    def intersect(self, other: "Box") -> "Box | None":
        lo = tuple(max(a, b) for a, b in zip(self.lo, other.lo))
        hi = tuple(min(a, b) for a, b in zip(self.hi, other.hi))
        if any(a > b for a, b in zip(lo, hi)):
            return None
        return Box(lo, hi)

    def shifted(self, v: Sequence[int]) -> "Box":
        return Box(tuple(a + s for a, s in zip(self.lo, v)), tuple(b + s for b, s in zip(self.hi, v)))

    def index(self, x: Sequence[int]) -> int:
        if not self.contains(x):
            raise ContainmentError(f"site {tuple(x)} is outside box lo={self.lo} hi={self.hi}")
        idx = 0
        for v, a, n in zip(x, self.lo, self.shape):
            idx = idx * n + (v - a)
        return idx

    def site(self, idx: int) -> tuple[int, ...]:
        out = []
        for a, n in zip(reversed(self.lo), reversed(self.shape)):
            idx, r = divmod(idx, n)
            out.append(a + r)
        return tuple(reversed(out))

    def sites(self) -> Iterable[tuple[int, ...]]:
        return itertools.product(*(range(a, b + 1) for a, b in zip(self.lo, self.hi)))

    @cached_property
    def coords(self) -> np.ndarray:
        """(volume, d) int64 array of site coordinates in index order."""
        grids = np.meshgrid(*(np.arange(a, b + 1, dtype=np.int64) for a, b in zip(self.lo, self.hi)),
                            indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    def indices_of(self, coords: np.ndarray) -> np.ndarray:
        """Vectorized :meth:`index`; returns -1 for coordinates outside the box."""
        coords = np.asarray(coords, dtype=np.int64).reshape(-1, self.d)
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        inside = np.all((coords >= lo) & (coords <= hi), axis=1)
        rel = coords - lo
        idx = np.zeros(len(coords), dtype=np.int64)
        for axis, n in enumerate(self.shape):
            idx = idx * n + rel[:, axis]
        return np.where(inside, idx, -1)


def _check_periodic(box: Box) -> None:
    if any(n < 3 for n in box.shape):
        raise ValueError("periodic boxes need every side length >= 3")


def _unit_vectors(d: int) -> list[tuple[int, ...]]:
    out = []
    for axis in range(d):
        for sign in (1, -1):
            e = [0] * d
            e[axis] = sign
            out.append(tuple(e))
    return out


def neighbors(box: Box, x: Sequence[int], rule: BoundaryRule | str = BoundaryRule.ABSORBING
              ) -> list[tuple[int, ...]]:
    """Nearest neighbours of ``x`` (l1 distance 1) under the boundary rule."""
    rule = BoundaryRule.parse(rule)
    x = tuple(int(v) for v in x)
    if not box.contains(x):
        raise ContainmentError(f"site {x} is outside box lo={box.lo} hi={box.hi}")
    if rule is BoundaryRule.PERIODIC:
        _check_periodic(box)
    out = []
    for e in _unit_vectors(box.d):
        y = tuple(v + s for v, s in zip(x, e))
        if box.contains(y):
            out.append(y)
        elif rule is BoundaryRule.PERIODIC:
            out.append(tuple(a + (v - a) % n for v, a, n in zip(y, box.lo, box.shape)))
    return out


def neighbor_table(box: Box, rule: BoundaryRule | str = BoundaryRule.ABSORBING) -> np.ndarray:
    """(volume, 2d) array of neighbour indices, -1 where a neighbour lies outside an absorbing box."""
    rule = BoundaryRule.parse(rule)
    if rule is BoundaryRule.PERIODIC:
        _check_periodic(box)
    coords = box.coords
    lo = np.asarray(box.lo)
    shape = np.asarray(box.shape)
    cols = []
    for e in _unit_vectors(box.d):
        y = coords + np.asarray(e)
        if rule is BoundaryRule.PERIODIC:
            y = lo + (y - lo) % shape
        cols.append(box.indices_of(y))
    return np.stack(cols, axis=1)


def enumerate_edges(box: Box, rule: BoundaryRule | str = BoundaryRule.ABSORBING
                    ) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
    """All oriented nearest-neighbour edges ``(x, y)`` with both endpoints in the box."""
    return [(x, y) for x in box.sites() for y in neighbors(box, x, rule)]


@dataclass(frozen=True, eq=False)
class Configuration:
    """Spin configuration in {-1, 0, 1} over a box; 1 = fertile, -1 = sterile/blocked, 0 = empty."""

    box: Box
    states: np.ndarray

    def __post_init__(self):
        states = np.asarray(self.states, dtype=np.int8).reshape(-1).copy()
        if states.size != self.box.volume:
            raise ValueError(f"expected {self.box.volume} states, got {states.size}")
        if np.any((states < -1) | (states > 1)):
            raise ValueError("states must lie in {-1, 0, 1}")
        states.setflags(write=False)
        object.__setattr__(self, "states", states)

    @classmethod
    def empty(cls, box: Box) -> "Configuration":
        return cls(box, np.zeros(box.volume, dtype=np.int8))

    @classmethod
    def full(cls, box: Box, value: int = 1, within: Box | None = None) -> "Configuration":
        """All sites (or those inside ``within``) set to ``value``."""
        states = np.zeros(box.volume, dtype=np.int8)
        if within is None:
            states[:] = value
        else:
            lo, hi = np.asarray(within.lo), np.asarray(within.hi)
            mask = np.all((box.coords >= lo) & (box.coords <= hi), axis=1)
            states[mask] = value
        return cls(box, states)

    @classmethod
    def from_sites(cls, box: Box, fertile: Iterable[Sequence[int]] = (),
                   sterile: Iterable[Sequence[int]] = ()) -> "Configuration":
        states = np.zeros(box.volume, dtype=np.int8)
        for x in fertile:
            states[box.index(x)] = 1
        for x in sterile:
            states[box.index(x)] = -1
        return cls(box, states)

    def __eq__(self, other) -> bool:
        return (isinstance(other, Configuration) and other.box == self.box
                and np.array_equal(other.states, self.states))

    def __hash__(self):
        return hash((self.box, self.states.tobytes()))

    def __getitem__(self, x: Sequence[int]) -> int:
        return int(self.states[self.box.index(x)])

    def with_states(self, states: np.ndarray) -> "Configuration":
        return Configuration(self.box, states)

    def fertile_sites(self) -> set[tuple[int, ...]]:
        return {self.box.site(int(i)) for i in np.flatnonzero(self.states == 1)}

    def sterile_sites(self) -> set[tuple[int, ...]]:
        return {self.box.site(int(i)) for i in np.flatnonzero(self.states == -1)}

    @property
    def fertile_count(self) -> int:
        return int(np.count_nonzero(self.states == 1))

    @property
    def sterile_count(self) -> int:
        return int(np.count_nonzero(self.states == -1))

    def embed(self, box: Box) -> "Configuration":
        """Copy onto another box; sites of ``box`` not covered by ``self.box`` are 0.

        Non-zero states that would fall outside ``box`` raise.
        """
        out = np.zeros(box.volume, dtype=np.int8)
        idx = box.indices_of(self.box.coords)
        nz = self.states != 0
        if np.any(nz & (idx < 0)):
            raise ContainmentError("configuration support does not fit in the target box")
        keep = idx >= 0
        out[idx[keep]] = self.states[keep]
        return Configuration(box, out)


def translate(box: Box, c: Configuration, v: Sequence[int],
              rule: BoundaryRule | str = BoundaryRule.ABSORBING) -> Configuration:
    """tau_v c, i.e. ``(tau_v c)(x) = c(x - v)``; sites whose preimage leaves the box read 0
    (absorbing) or wrap around (periodic)."""
    rule = BoundaryRule.parse(rule)
    v = tuple(int(s) for s in v)
    if len(v) != box.d or c.box != box:
        raise ValueError("translation vector / configuration box does not match the box dimension")
    src = box.coords - np.asarray(v, dtype=np.int64)
    if rule is BoundaryRule.PERIODIC:
        lo, shape = np.asarray(box.lo), np.asarray(box.shape)
        src = lo + (src - lo) % shape
    idx = box.indices_of(src)
    out = np.where(idx >= 0, c.states[np.maximum(idx, 0)], 0).astype(np.int8)
    return Configuration(box, out)
