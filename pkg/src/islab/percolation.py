"""Oriented site percolation on the even lattice {(m, n): m + n even, n >= 0}.

A site (m, n) leads to (m - 1, n + 1) and (m + 1, n + 1).  Fields are stored densely as
``open[n, m + m_max]`` with odd-parity cells permanently closed.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable

import numpy as np


@dataclass(frozen=True)
class EvenLattice:
    n_max: int
    m_max: int

    def __post_init__(self):
        if self.n_max < 0 or self.m_max < 0:
            raise ValueError("lattice bounds must be nonnegative")

    @property
    def shape(self) -> tuple[int, int]:
        return self.n_max + 1, 2 * self.m_max + 1

    def parity_mask(self) -> np.ndarray:
        n = np.arange(self.n_max + 1)[:, None]
        m = np.arange(-self.m_max, self.m_max + 1)[None, :]
        return (m + n) % 2 == 0

    def contains(self, m: int, n: int) -> bool:
        return 0 <= n <= self.n_max and abs(m) <= self.m_max and (m + n) % 2 == 0

    def sites(self) -> list[tuple[int, int]]:
        return [(m, n) for n in range(self.n_max + 1) for m in range(-self.m_max, self.m_max + 1)
                if (m + n) % 2 == 0]


@dataclass(frozen=True, eq=False)
class PercolationField:
    lattice: EvenLattice
    open: np.ndarray
    sampler: dict = field(default_factory=dict)

    def __post_init__(self):
        arr = np.asarray(self.open, dtype=bool) & self.lattice.parity_mask()
        if arr.shape != self.lattice.shape:
            raise ValueError(f"field shape {arr.shape} does not match lattice {self.lattice.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "open", arr)

    def is_open(self, m: int, n: int) -> bool:
        if not self.lattice.contains(m, n):
            raise ValueError(f"site {(m, n)} is outside the lattice")
        return bool(self.open[n, m + self.lattice.m_max])

    def open_fraction(self) -> float:
        return float(self.open.sum() / self.lattice.parity_mask().sum())


def site_uniforms(lattice: EvenLattice, seed: int) -> np.ndarray:
    """One uniform per cell; thresholding the same draws at p1 < p2 nests the fields."""
    return np.random.default_rng(seed).random(lattice.shape)


def sample_independent(lattice: EvenLattice, p: float, seed: int) -> PercolationField:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    u = site_uniforms(lattice, seed)
    return PercolationField(lattice, u < p, {"kind": "independent", "p": p, "seed": seed})


def _check_site(lat: EvenLattice, m: int, n: int) -> None:
    if not lat.contains(m, n):
        raise ValueError(f"site {(m, n)} is outside the lattice or has the wrong parity")


def open_path_exists(f: PercolationField, start: tuple[int, int], end: tuple[int, int],
                     start_open_required: bool = True) -> bool:
    """Level-by-level search for an oriented open path from ``start`` (level 0) to ``end``."""
    lat = f.lattice
    _check_site(lat, *start)
    _check_site(lat, *end)
    if start[1] != 0:
        raise ValueError("paths start at level 0")
    m0, (m1, n1) = start[0], end
    if n1 == 0:
        return m0 == m1 and (f.is_open(m0, 0) or not start_open_required)
    if start_open_required and not f.is_open(m0, 0):
        return False
    row = np.zeros(lat.shape[1], dtype=bool)
    row[m0 + lat.m_max] = True
    for n in range(1, n1 + 1):
        nxt = np.zeros_like(row)
        nxt[1:] |= row[:-1]
        nxt[:-1] |= row[1:]
        row = nxt & f.open[n]
        if not row.any():
            return False
    return bool(row[m1 + lat.m_max])


@dataclass(frozen=True)
class Cluster:
    levels: tuple[frozenset, ...]
    size: int
    status: str   # "extinct", "top" or "cap"

    @property
    def reached_top(self) -> bool:
        return self.status == "top"


def cluster_from_origin(f: PercolationField, cap: int = 10 ** 7,
                        origins: Iterable[int] | None = None) -> Cluster:
    """Grow A_n level by level.  Without ``origins`` the cluster starts at (0, 0), which must
    be open; explicit origins (even integers) are taken as open."""
    lat = f.lattice
    row = np.zeros(lat.shape[1], dtype=bool)
    if origins is None:
        _check_site(lat, 0, 0)
        row[lat.m_max] = f.open[0, lat.m_max]
    else:
        for m in origins:
            _check_site(lat, int(m), 0)
            row[int(m) + lat.m_max] = True
    levels = [frozenset((np.flatnonzero(row) - lat.m_max).tolist())]
    size = int(row.sum())
    if size == 0:
        return Cluster(tuple(levels), 0, "extinct")
    for n in range(1, lat.n_max + 1):
        nxt = np.zeros_like(row)
        nxt[1:] |= row[:-1]
        nxt[:-1] |= row[1:]
        row = nxt & f.open[n]
        levels.append(frozenset((np.flatnonzero(row) - lat.m_max).tolist()))
        size += int(row.sum())
        if not row.any():
            return Cluster(tuple(levels), size, "extinct")
        if size >= cap:
            return Cluster(tuple(levels), size, "cap")
    return Cluster(tuple(levels), size, "top")


def survival_batch(lattice: EvenLattice, p: float, seeds: Iterable[int]) -> np.ndarray:
    """Reached-top indicator of the origin cluster for each seed."""
    return np.array([cluster_from_origin(sample_independent(lattice, p, int(s))).reached_top
                     for s in seeds], dtype=bool)


# ---------------------------------------------------------------------------
# exhaustive oracles

def cone_sites(height: int, m_max: int) -> list[tuple[int, int]]:
    return [(m, n) for n in range(height + 1) for m in range(-n, n + 1, 2) if abs(m) <= m_max]


def enumerate_paths(start: int, end: tuple[int, int]) -> list[list[tuple[int, int]]]:
    """Every oriented lattice path (ignoring openness) from (start, 0) to ``end``."""
    m1, n1 = end
    out = []
    for steps in itertools.product((-1, 1), repeat=n1):
        path = [(start, 0)]
        for s in steps:
            path.append((path[-1][0] + s, path[-1][1] + 1))
        if path[-1][0] == m1:
            out.append(path)
    return out


def path_exists_by_enumeration(open_sites: set, start: int, end: tuple[int, int],
                               m_max: int) -> bool:
    return any(all(abs(m) <= m_max and (m, n) in open_sites for m, n in path)
               for path in enumerate_paths(start, end))


def exact_survival(p: float, height: int, m_max: int | None = None) -> float:
    """P(origin cluster reaches level ``height``), summing over all fields on the cone."""
    m_max = height if m_max is None else m_max
    sites = cone_sites(height, m_max)
    if len(sites) > 20:
        raise ValueError("exhaustive enumeration is limited to 20 sites")
    index = {s: i for i, s in enumerate(sites)}
    bits = (np.arange(2 ** len(sites))[:, None] >> np.arange(len(sites))[None, :]) & 1
    bits = bits.astype(bool)
    reach = bits[:, [index[(0, 0)]]].copy()
    for n in range(1, height + 1):
        here = [s for s in sites if s[1] == n]
        cols = []
        prev = [s for s in sites if s[1] == n - 1]
        for m, _ in here:
            parents = [prev.index(q) for q in prev if abs(q[0] - m) == 1]
            got = np.zeros(bits.shape[0], dtype=bool)
            for j in parents:
                got |= reach[:, j]
            cols.append(got & bits[:, index[(m, n)]])
        reach = np.stack(cols, axis=1)
    alive = reach.any(axis=1)
    k = bits.sum(axis=1)
    weights = p ** k * (1 - p) ** (len(sites) - k)
    return float(weights[alive].sum())


# ---------------------------------------------------------------------------
# dependent fields

@dataclass(frozen=True)
class Threshold:
    value: float
    exact: Fraction
    base: int
    exponent: int


def dependent_threshold(M: int) -> Threshold:
    """6 ** (-4 (2M + 1)): below this closure intensity an M-dependent field percolates."""
    if M < 0:
        raise ValueError("M must be >= 0")
    e = -4 * (2 * M + 1)
    exact = Fraction(1, 6 ** (-e))
    return Threshold(float(exact), exact, 6, e)


def m_dependent_from_blocks(lattice: EvenLattice, block_open: Callable[[int, int], bool],
                            M: int, gamma: float) -> PercolationField:
    arr = np.zeros(lattice.shape, dtype=bool)
    for m, n in lattice.sites():
        arr[n, m + lattice.m_max] = bool(block_open(m, n))
    return PercolationField(lattice, arr, {"kind": "m_dependent", "M": M, "gamma": gamma})


def synthetic_m_dependent(lattice: EvenLattice, M: int, gamma: float, seed: int) -> PercolationField:
    """open(m, n) = OR_{i <= M} Z(m - i, n - i) with i.i.d. Z closed w.p. gamma ** (1/(M+1)).

    Each site is closed with probability gamma, and sites further than M apart in the sup
    norm read disjoint noise.
    """
    if not 0 < gamma < 1:
        raise ValueError("gamma must lie in (0, 1)")
    q = gamma ** (1.0 / (M + 1))
    rng = np.random.default_rng(seed)
    n_rows, n_cols = lattice.shape
    z = rng.random((n_rows + M, n_cols + M)) >= q
    arr = np.zeros(lattice.shape, dtype=bool)
    for i in range(M + 1):
        arr |= z[M - i:M - i + n_rows, M - i:M - i + n_cols]
    return PercolationField(lattice, arr, {"kind": "m_dependent", "M": M, "gamma": gamma,
                                           "seed": seed})


def some_open_frequency(fields: Iterable[PercolationField], sites: list[tuple[int, int]]) -> float:
    """Fraction of fields in which at least one of ``sites`` is open."""
    hits = [any(f.is_open(m, n) for m, n in sites) for f in fields]
    return float(np.mean(hits))


def min_separation(sites: list[tuple[int, int]]) -> float:
    """Smallest pairwise sup-norm distance."""
    return min(max(abs(a[0] - b[0]), abs(a[1] - b[1]))
               for a, b in itertools.combinations(sites, 2)) if len(sites) > 1 else math.inf
