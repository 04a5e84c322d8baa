"""Harris graphical representation: Poisson marks on a space-time box.

Every (entity, stream family) pair owns an independent counter-based sub-stream derived
from ``(seed, hash(entity coordinates), family)``.  Marks attributed to a given entity
therefore do not depend on which other entities are present, so timelines generated on
nested boxes share their randomness exactly.

Birth arrows are generated per oriented edge at total rate ``lam`` and labelled fertile
with probability ``p`` (sterile otherwise); by Poisson thinning the fertile and sterile
arrows are independent Poisson processes of rates ``lam*p`` and ``lam*(1-p)``.

Under the absorbing rule each boundary site also receives "ghost" arrows from its
neighbours outside the box.  Their sources are permanently empty, so they only matter to
``Spont``, whose spontaneous blocking clock at a site is the superposition of its 2d
incoming sterile arrows.
"""

from __future__ import annotations

import enum
import hashlib
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple, Sequence

import numba as nb
import numpy as np

from .lattice import Box, BoundaryRule, ContainmentError, _unit_vectors, neighbor_table


class ParameterError(ValueError):
    pass


class StreamKind(enum.IntEnum):
    BirthFertile = 0
    BirthSterile = 1
    DeathFertile = 2
    DeathSterile = 3
    # auxiliary families of a split timeline
    ExtraFertile = 4
    ExtraSterile = 5

    @property
    def on_edge(self) -> bool:
        return self in (StreamKind.BirthFertile, StreamKind.BirthSterile,
                        StreamKind.ExtraFertile, StreamKind.ExtraSterile)


class Mark(NamedTuple):
    time: float
    kind: StreamKind
    entity: int  # edge index for arrows, site index for deaths


# stream families
FAM_ARROW, FAM_DEATH_F, FAM_DEATH_S, FAM_AUX = 0, 1, 2, 3

_GOLD = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_COORD_OFFSET = 1 << 40
_MAX_SEED = (1 << 63) - 1


@nb.njit(cache=True, inline="always")
def mix64(z):
    z = z + _GOLD
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@nb.njit(cache=True, inline="always")
def uniform01(state, counter):
    """Uniform in [0, 1) from the ``counter``-th draw of a stream."""
    return float(mix64(state + np.uint64(counter) * _GOLD) >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@nb.njit(cache=True)
def stream_state(seed, key, family):
    h = mix64(np.uint64(seed))
    h = mix64(h ^ key)
    return mix64(h ^ (np.uint64(family + 1) * _M1))


@nb.njit(cache=True)
def _site_keys(coords):
    n, d = coords.shape
    out = np.empty(n, dtype=np.uint64)
    for i in range(n):
        k = mix64(np.uint64(0x5EED) ^ np.uint64(d))
        for a in range(d):
            k = mix64(k ^ np.uint64(coords[i, a] + _COORD_OFFSET))
        out[i] = k
    return out


@nb.njit(cache=True)
def _edge_keys(src_keys, dst_keys):
    out = np.empty(src_keys.size, dtype=np.uint64)
    for i in range(src_keys.size):
        out[i] = mix64(mix64(src_keys[i] ^ np.uint64(0xED6E)) ^ dst_keys[i])
    return out


def site_keys(coords: np.ndarray) -> np.ndarray:
    return _site_keys(np.ascontiguousarray(coords, dtype=np.int64))


@dataclass(frozen=True, eq=False)
class ArrowLayout:
    """Entity tables for a (box, rule): oriented edges (in-box first, then ghosts) and sites."""

    box: Box
    rule: BoundaryRule
    edge_src: np.ndarray      # source site index, -1 for ghost edges
    edge_dst: np.ndarray
    edge_src_coords: np.ndarray
    edge_key: np.ndarray
    site_key: np.ndarray
    n_inbox_edges: int
    edge_lookup: dict = field(repr=False)

    @property
    def n_edges(self) -> int:
        return int(self.edge_src.size)

    @property
    def n_sites(self) -> int:
        return self.box.volume

    def in_degree(self) -> np.ndarray:
        return np.bincount(self.edge_dst, minlength=self.n_sites)

    def edge(self, e: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
        return tuple(int(v) for v in self.edge_src_coords[e]), self.box.site(int(self.edge_dst[e]))


@lru_cache(maxsize=64)
def arrow_layout(box: Box, rule: BoundaryRule | str = BoundaryRule.ABSORBING) -> ArrowLayout:
    rule = BoundaryRule.parse(rule)
    nbr = neighbor_table(box, rule)
    coords = box.coords
    src, dst, src_coords = [], [], []
    # in-box edges in row-major source order, matching lattice.enumerate_edges
    for x in range(box.volume):
        for j in range(nbr.shape[1]):
            y = nbr[x, j]
            if y >= 0:
                src.append(x)
                dst.append(y)
                src_coords.append(coords[x])
    n_inbox = len(src)
    if rule is BoundaryRule.ABSORBING:
        units = np.asarray(_unit_vectors(box.d), dtype=np.int64)
        for y in range(box.volume):
            for j in range(nbr.shape[1]):
                if nbr[y, j] < 0:
                    src.append(-1)
                    dst.append(y)
                    src_coords.append(coords[y] + units[j])
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    src_coords = np.asarray(src_coords, dtype=np.int64).reshape(-1, box.d)
    skeys = site_keys(coords)
    ekeys = _edge_keys(site_keys(src_coords), skeys[dst]) if dst.size else np.empty(0, np.uint64)
    lookup = {(tuple(int(v) for v in src_coords[e]), int(dst[e])): e for e in range(dst.size)}
    for arr in (src, dst, src_coords, skeys, ekeys):
        arr.setflags(write=False)
    return ArrowLayout(box, rule, src, dst, src_coords, ekeys, skeys, n_inbox, lookup)


# ---------------------------------------------------------------------------
# generation kernels

@nb.njit(cache=True)
def init_streams(seed, edge_key, site_key, rate_arrow, rate_death_f, rate_death_s, rate_aux):
    n_e = edge_key.size
    n_s = site_key.size
    n = 2 * n_e + 2 * n_s
    state = np.empty(n, dtype=np.uint64)
    rate = np.empty(n, dtype=np.float64)
    family = np.empty(n, dtype=np.int8)
    entity = np.empty(n, dtype=np.int64)
    s = 0
    for e in range(n_e):
        state[s] = stream_state(seed, edge_key[e], FAM_ARROW)
        rate[s] = rate_arrow
        family[s] = FAM_ARROW
        entity[s] = e
        s += 1
    for i in range(n_s):
        state[s] = stream_state(seed, site_key[i], FAM_DEATH_F)
        rate[s] = rate_death_f
        family[s] = FAM_DEATH_F
        entity[s] = i
        s += 1
    for i in range(n_s):
        state[s] = stream_state(seed, site_key[i], FAM_DEATH_S)
        rate[s] = rate_death_s
        family[s] = FAM_DEATH_S
        entity[s] = i
        s += 1
    for e in range(n_e):
        state[s] = stream_state(seed, edge_key[e], FAM_AUX)
        rate[s] = rate_aux
        family[s] = FAM_AUX
        entity[s] = e
        s += 1
    nxt = np.empty(n, dtype=np.float64)
    label = np.zeros(n, dtype=np.float64)
    count = np.zeros(n, dtype=np.int64)
    for s in range(n):
        if rate[s] > 0.0:
            nxt[s] = -math.log1p(-uniform01(state[s], 0)) / rate[s]
            label[s] = uniform01(state[s], 1)
        else:
            nxt[s] = np.inf
    return state, rate, family, entity, nxt, label, count


@nb.njit(cache=True)
def _kind_of(fam, lab, a, b):
    if fam == FAM_ARROW:
        if lab < a:
            return 0
        if lab < b:
            return 4
        return 1
    if fam == FAM_DEATH_F:
        return 2
    if fam == FAM_DEATH_S:
        return 3
    return 5


@nb.njit(cache=True)
def fill_chunk(state, rate, family, entity, nxt, label, count, edge_src, a, b, t_end,
               buf_t, buf_k, buf_e):
    """Emit every pending mark with time < t_end, advancing the streams.

    Returns (n, buf_t, buf_k, buf_e); buffers are reallocated when full.
    """
    n = 0
    for s in range(state.size):
        fam = family[s]
        while nxt[s] < t_end:
            k = _kind_of(fam, label[s], a, b)
            ghost_fertile = (k == 0 or k == 4) and edge_src[entity[s]] < 0
            if not ghost_fertile:
                if n == buf_t.size:
                    cap = 2 * buf_t.size + 64
                    nt = np.empty(cap, dtype=np.float64)
                    nk = np.empty(cap, dtype=np.int8)
                    ne = np.empty(cap, dtype=np.int64)
                    nt[:n] = buf_t[:n]
                    nk[:n] = buf_k[:n]
                    ne[:n] = buf_e[:n]
                    buf_t, buf_k, buf_e = nt, nk, ne
                buf_t[n] = nxt[s]
                buf_k[n] = k
                buf_e[n] = entity[s]
                n += 1
            c = count[s] + 1
            count[s] = c
            nxt[s] = nxt[s] - math.log1p(-uniform01(state[s], 2 * c)) / rate[s]
            label[s] = uniform01(state[s], 2 * c + 1)
    return n, buf_t, buf_k, buf_e


@nb.njit(cache=True, inline="always")
def _key_less(t1, k1, e1, t2, k2, e2):
    if t1 != t2:
        return t1 < t2
    if k1 != k2:
        return k1 < k2
    return e1 < e2


@nb.njit(cache=True)
def order_chunk(buf_t, buf_k, buf_e, n, last_t, t_lo, t_hi):
    """Sort n buffered marks by (time, kind, entity) and make times strictly increasing.

    Marks are roughly uniform on ``[t_lo, t_hi)``, so a bucket pass followed by insertion
    sort inside each bucket is linear on average.  ``last_t`` is the final stored time of
    the previous chunk (-inf for the first).
    """
    t = np.empty(n, dtype=np.float64)
    k = np.empty(n, dtype=np.int8)
    e = np.empty(n, dtype=np.int64)
    if n > 0:
        width = t_hi - t_lo
        scale = n / width if width > 0 else 0.0
        start = np.zeros(n + 1, dtype=np.int64)
        bucket = np.empty(n, dtype=np.int64)
        for i in range(n):
            b = int((buf_t[i] - t_lo) * scale)
            b = min(max(b, 0), n - 1)
            bucket[i] = b
            start[b + 1] += 1
        for b in range(n):
            start[b + 1] += start[b]
        fill = start[:n].copy()
        for i in range(n):
            b = bucket[i]
            pos = fill[b]
            fill[b] = pos + 1
            tt, kk, ee = buf_t[i], buf_k[i], buf_e[i]
            # insertion into the bucket's sorted prefix
            v = pos - 1
            while v >= start[b] and _key_less(tt, kk, ee, t[v], k[v], e[v]):
                t[v + 1] = t[v]
                k[v + 1] = k[v]
                e[v + 1] = e[v]
                v -= 1
            t[v + 1] = tt
            k[v + 1] = kk
            e[v + 1] = ee
    prev = last_t
    for i in range(n):
        if t[i] <= prev:
            t[i] = np.nextafter(prev, np.inf)
        prev = t[i]
    return t, k, e, prev


@nb.njit(cache=True)
def materialize(seed, edge_key, site_key, edge_src, rate_arrow, rate_aux, a, b, horizon):
    state, rate, family, entity, nxt, label, count = init_streams(
        seed, edge_key, site_key, rate_arrow, 1.0, 1.0, rate_aux)
    total = (rate_arrow + rate_aux) * edge_key.size + 2.0 * site_key.size
    cap = int(total * horizon * 1.1 + 10.0 * math.sqrt(total * horizon + 1.0) + 64)
    buf_t = np.empty(cap, dtype=np.float64)
    buf_k = np.empty(cap, dtype=np.int8)
    buf_e = np.empty(cap, dtype=np.int64)
    n, buf_t, buf_k, buf_e = fill_chunk(state, rate, family, entity, nxt, label, count, edge_src,
                                        a, b, horizon, buf_t, buf_k, buf_e)
    t, k, e, _ = order_chunk(buf_t, buf_k, buf_e, n, -np.inf, 0.0, horizon)
    return t, k, e


# ---------------------------------------------------------------------------
# timelines

def _check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed <= _MAX_SEED:
        raise ParameterError(f"seed must lie in [0, 2**63), got {seed}")
    return seed


def _check_params(lam: float, p: float, T: float) -> None:
    if not (T > 0 and math.isfinite(T)):
        raise ParameterError(f"horizon T must be positive and finite, got {T}")
    if not lam >= 0 or not math.isfinite(lam):
        raise ParameterError(f"lambda must be >= 0, got {lam}")
    if not 0.0 <= p <= 1.0:
        raise ParameterError(f"p must lie in [0, 1], got {p}")


@dataclass(frozen=True, eq=False)
class EventTimeline:
    """Time-sorted marks on ``box x [0, horizon)``; arrays are read-only."""

    box: Box
    rule: BoundaryRule
    lam: float
    p: float
    horizon: float
    seed: int
    times: np.ndarray
    kinds: np.ndarray
    entities: np.ndarray

    def __post_init__(self):
        for arr in (self.times, self.kinds, self.entities):
            arr.setflags(write=False)

    @property
    def layout(self) -> ArrowLayout:
        return arrow_layout(self.box, self.rule)

    def __len__(self) -> int:
        return int(self.times.size)

    @property
    def marks(self) -> list[Mark]:
        return [Mark(float(t), StreamKind(int(k)), int(e))
                for t, k, e in zip(self.times, self.kinds, self.entities)]

    def count(self, kind: StreamKind) -> int:
        return int(np.count_nonzero(self.kinds == int(kind)))

    def target_sites(self) -> np.ndarray:
        """Site index touched by each mark (edge target for arrows)."""
        on_edge = np.isin(self.kinds, (0, 1, 4, 5))
        return np.where(on_edge, self.layout.edge_dst[np.where(on_edge, self.entities, 0)],
                        self.entities)

    def entity_label(self, kind: int, entity: int) -> str:
        if StreamKind(kind).on_edge:
            x, y = self.layout.edge(entity)
            return ":".join(map(str, x)) + ">" + ":".join(map(str, y))
        return ":".join(map(str, self.box.site(entity)))

    def dump(self) -> str:
        """Newline-delimited ``time,kind,entity`` records (17 significant digits)."""
        return "".join(f"{t:.17g},{StreamKind(int(k)).name},{self.entity_label(k, e)}\n"
                       for t, k, e in zip(self.times, self.kinds, self.entities))

    def with_marks(self, keep: np.ndarray, kinds: np.ndarray | None = None) -> "EventTimeline":
        return EventTimeline(self.box, self.rule, self.lam, self.p, self.horizon, self.seed,
                             self.times[keep].copy(),
                             (self.kinds if kinds is None else kinds)[keep].copy(),
                             self.entities[keep].copy())


def generate_timeline(box: Box, rule: BoundaryRule | str, lam: float, p: float, T: float,
                      seed: int) -> EventTimeline:
    """Materialize all marks on ``box x [0, T)`` for birth rate ``lam`` and fertility ``p``."""
    _check_params(lam, p, T)
    seed = _check_seed(seed)
    layout = arrow_layout(box, rule)
    t, k, e = materialize(seed, layout.edge_key, layout.site_key, layout.edge_src,
                          float(lam), 0.0, float(p), float(p), float(T))
    return EventTimeline(box, layout.rule, float(lam), float(p), float(T), seed, t, k, e)


@dataclass(frozen=True, eq=False)
class SplitTimeline:
    """Base marks plus the two auxiliary families coupling Spont(lam, p1) below Spont(lam, p2).

    Arrows labelled ``u < p1`` form N1 (rate lam*p1), ``p1 <= u < p2`` form the extra fertile
    family (rate lam*(p2-p1)) and ``u >= p2`` form N2 (rate lam*(1-p2)); an independent
    per-edge stream of rate lam*(p2-p1) supplies the extra sterile family, so each site sees
    extra blocking at rate 2d*lam*(p2-p1).
    """

    timeline: EventTimeline
    p1: float
    p2: float

    LOWER_MAP = {0: 0, 1: 1, 2: 2, 3: 3, 5: 1}   # N1 ; N2 + extra sterile ; U ; V
    UPPER_MAP = {0: 0, 4: 0, 1: 1, 2: 2, 3: 3}   # N1 + extra fertile ; N2 ; U ; V

    def stream_set(self, which: str) -> EventTimeline:
        """Marks driving the lower (p1) or upper (p2) process, relabelled to the four base kinds."""
        mapping = {"lower": self.LOWER_MAP, "upper": self.UPPER_MAP}[which]
        lut = np.full(6, -1, dtype=np.int8)
        for src, dst in mapping.items():
            lut[src] = dst
        kinds = lut[self.timeline.kinds]
        keep = kinds >= 0
        tl = self.timeline.with_marks(keep, kinds)
        p = self.p1 if which == "lower" else self.p2
        return EventTimeline(tl.box, tl.rule, tl.lam, p, tl.horizon, tl.seed, tl.times, tl.kinds,
                             tl.entities)


def generate_split_timeline(box: Box, rule: BoundaryRule | str, lam: float, p1: float, p2: float,
                            T: float, seed: int) -> SplitTimeline:
    _check_params(lam, p1, T)
    _check_params(lam, p2, T)
    if p1 > p2:
        raise ParameterError(f"need p1 <= p2, got p1={p1} > p2={p2}")
    seed = _check_seed(seed)
    layout = arrow_layout(box, rule)
    t, k, e = materialize(seed, layout.edge_key, layout.site_key, layout.edge_src,
                          float(lam), float(lam) * (p2 - p1), float(p1), float(p2), float(T))
    tl = EventTimeline(box, layout.rule, float(lam), float(p1), float(T), seed, t, k, e)
    return SplitTimeline(tl, float(p1), float(p2))


def restrict(t: EventTimeline, sub: Box, t0: float, t1: float) -> EventTimeline:
    """Marks of ``t`` inside ``sub x [t0, t1]``, re-based to start at time 0.

    Deaths and fertile arrows are kept when their site, resp. both edge endpoints, lie in
    ``sub``.  Sterile arrows are kept whenever their target lies in ``sub``: they become
    ghost arrows of the restricted box when their source is outside, so that the restricted
    timeline coincides with the one generated directly on ``sub``.
    """
    if not t.box.contains_box(sub):
        raise ContainmentError(f"sub-box {sub} is not contained in {t.box}")
    if not 0.0 <= t0 < t1 <= t.horizon:
        raise ParameterError(f"need 0 <= t0 < t1 <= horizon, got [{t0}, {t1}]")
    parent = t.layout
    child = arrow_layout(sub, BoundaryRule.ABSORBING)
    # parent entity index -> child entity index (or -1)
    site_map = sub.indices_of(t.box.coords)
    edge_map = np.full(parent.n_edges, -1, dtype=np.int64)
    edge_src_inside = np.zeros(parent.n_edges, dtype=bool)
    for e in range(parent.n_edges):
        dst_child = site_map[parent.edge_dst[e]]
        if dst_child < 0:
            continue
        key = (tuple(int(v) for v in parent.edge_src_coords[e]), int(dst_child))
        ce = child.edge_lookup.get(key, -1)
        edge_map[e] = ce
        if ce >= 0:
            edge_src_inside[e] = child.edge_src[ce] >= 0
    kinds = t.kinds
    on_edge = np.isin(kinds, (0, 1, 4, 5))
    fertile_arrow = np.isin(kinds, (0, 4))
    ent = t.entities
    new_ent = np.where(on_edge, edge_map[np.where(on_edge, ent, 0)], site_map[np.where(on_edge, 0, ent)])
    keep = (new_ent >= 0) & (t.times >= t0) & (t.times <= t1)
    keep &= ~fertile_arrow | edge_src_inside[np.where(on_edge, ent, 0)]
    return EventTimeline(sub, BoundaryRule.ABSORBING, t.lam, t.p, float(t1 - t0), t.seed,
                         t.times[keep] - t0, kinds[keep].copy(), new_ent[keep])


def derive_seed(root: int, *labels: int | str) -> int:
    """Deterministic child seed in [0, 2**63) for a named Monte Carlo consumer."""
    words = [int(root) & 0xFFFFFFFFFFFFFFFF]
    for lab in labels:
        if isinstance(lab, str):
            words.append(int.from_bytes(hashlib.blake2b(lab.encode(), digest_size=8).digest(), "little"))
        else:
            words.append(int(lab) & 0xFFFFFFFFFFFFFFFF)
    ss = np.random.SeedSequence(words)
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def seed_block(seed0: int, n: int) -> np.ndarray:
    return np.arange(int(seed0), int(seed0) + int(n), dtype=np.int64)


def total_rates(layout: ArrowLayout, lam: float) -> float:
    return lam * layout.n_edges + 2.0 * layout.n_sites
