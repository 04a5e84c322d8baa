"""Contact, IS and Spont dynamics driven by a shared timeline.

All three processes read the same marks; they differ only in how a sterile arrow acts:
IS needs a fertile source, Spont blocks the target regardless of the source, and the
contact process ignores it.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numba as nb
import numpy as np

from .events import (EventTimeline, ParameterError, StreamKind, arrow_layout, fill_chunk,
                     init_streams, materialize, order_chunk, _check_seed)
from .lattice import Box, BoundaryRule, Configuration

CONTACT, IS, SPONT = 0, 1, 2
FERT, STER, KILL_F, KILL_S, IGNORE = 0, 1, 2, 3, -1

# order codes on {-1, 0, 1}; the last one only compares fertile sites (a = 1 implies b = 1)
ORDER_NEG_FIRST, ORDER_ZERO_FIRST, ORDER_PARTIAL, ORDER_FERTILE = 0, 1, 2, 3


class ProcessKind(str, enum.Enum):
    Contact = "contact"
    IS = "is"
    Spont = "spont"

    @property
    def code(self) -> int:
        return {"contact": CONTACT, "is": IS, "spont": SPONT}[self.value]

    @classmethod
    def parse(cls, value) -> "ProcessKind":
        if isinstance(value, cls):
            return value
        v = str(value).lower()
        for k in cls:
            if k.value == v or k.name.lower() == v:
                return k
        raise ValueError(f"unknown process kind {value!r}")


# role of each mark kind (0..5) for a process reading a plain or split timeline
BASE_ROLES = np.array([FERT, STER, KILL_F, KILL_S, IGNORE, IGNORE], dtype=np.int8)
SPLIT_LOWER_ROLES = np.array([FERT, STER, KILL_F, KILL_S, IGNORE, STER], dtype=np.int8)
SPLIT_UPPER_ROLES = np.array([FERT, STER, KILL_F, KILL_S, FERT, IGNORE], dtype=np.int8)


@nb.njit(cache=True)
def apply_mark(proc, role, states, kind, ent, edge_src, edge_dst):
    """Apply one mark in place; returns (changed site or -1, previous state)."""
    r = role[kind]
    if r == FERT:
        y = edge_dst[ent]
        x = edge_src[ent]
        if states[y] == 0 and x >= 0 and states[x] == 1:
            states[y] = 1
            return y, 0
    elif r == STER:
        if proc == CONTACT:
            return -1, 0
        y = edge_dst[ent]
        if states[y] == 0:
            x = edge_src[ent]
            if proc == SPONT or (x >= 0 and states[x] == 1):
                states[y] = -1
                return y, 0
    elif r == KILL_F:
        if states[ent] == 1:
            states[ent] = 0
            return ent, 1
    elif r == KILL_S:
        if states[ent] == -1:
            states[ent] = 0
            return ent, -1
    return -1, 0


@nb.njit(cache=True, inline="always")
def state_leq(order, a, b):
    if a == b:
        return True
    if order == ORDER_NEG_FIRST:
        return a < b
    if order == ORDER_ZERO_FIRST:
        ra = 2 if a == 1 else (1 if a == -1 else 0)
        rb = 2 if b == 1 else (1 if b == -1 else 0)
        return ra < rb
    if order == ORDER_PARTIAL:
        return b == 1
    return a != 1


_STEP_TABLE = {}


def step_semantics(kind: ProcessKind, state_src: int, state_dst: int, mark_kind: StreamKind) -> int:
    """Pure flip rule: new state of the mark's target (edge target, or the site for deaths)."""
    kind = ProcessKind.parse(kind)
    mark_kind = StreamKind(mark_kind)
    states = np.array([state_src, state_dst], dtype=np.int8)
    src = np.array([0], dtype=np.int64)
    dst = np.array([1], dtype=np.int64)
    if mark_kind.on_edge:
        apply_mark(kind.code, BASE_ROLES, states, int(mark_kind), 0, src, dst)
    else:
        apply_mark(kind.code, BASE_ROLES, states, int(mark_kind), 1, src, dst)
    return int(states[1])


# ---------------------------------------------------------------------------
# fused generation + evolution over many seeds

@nb.njit(cache=True)
def _check_site(order, cur, K, site):
    bad = 0
    for j in range(K - 1):
        if not state_leq(order, cur[j, site], cur[j + 1, site]):
            bad += 1
    return bad


@nb.njit(cache=True)
def _first_bad_pair(order, cur, K, site):
    for j in range(K - 1):
        if not state_leq(order, cur[j, site], cur[j + 1, site]):
            return j
    return -1


@nb.njit(cache=True)
def run_chain_batch(seeds, edge_key, site_key, edge_src, edge_dst, rate_arrow, rate_aux,
                    a, b, horizon, procs, roles, inits, order, early_stop, chunk_marks,
                    rate_death_s=1.0):
    """Evolve K processes on the timeline of each seed, generating marks chunk by chunk.

    Process k reads marks through ``roles[k]``; the sitewise order ``cur[k] <= cur[k+1]`` is
    checked after every mark that changes a state.  With ``early_stop`` the replay ends once no process
    has a fertile site (and, for K > 1, no violation has occurred).  ``rate_death_s = 0``
    drops the sterile-death family, which is silent when no process can hold a -1.
    """
    n_seeds = seeds.size
    K, V = inits.shape
    alive = np.zeros((n_seeds, K), dtype=np.bool_)
    ext_time = np.full((n_seeds, K), np.inf)
    n_viol = np.zeros(n_seeds, dtype=np.int64)
    first_viol = np.full((n_seeds, 5), np.nan)
    total_rate = (rate_arrow + rate_aux) * edge_key.size + (1.0 + rate_death_s) * site_key.size
    dt = chunk_marks / total_rate if total_rate > 0 else horizon
    cap = int(chunk_marks * 1.5) + 64
    buf_t = np.empty(cap, dtype=np.float64)
    buf_k = np.empty(cap, dtype=np.int8)
    buf_e = np.empty(cap, dtype=np.int64)
    cur = np.empty((K, V), dtype=np.int8)
    fert = np.zeros(K, dtype=np.int64)
    for si in range(n_seeds):
        cur[:, :] = inits
        for k in range(K):
            fert[k] = 0
            for v in range(V):
                if cur[k, v] == 1:
                    fert[k] += 1
            if fert[k] == 0:
                ext_time[si, k] = 0.0
        viol = 0
        tot = 0
        for k in range(K):
            tot += fert[k]
        stopped = early_stop and tot == 0
        state, rate, family, entity, nxt, label, count = init_streams(
            seeds[si], edge_key, site_key, rate_arrow, 1.0, rate_death_s, rate_aux)
        t_lo = 0.0
        last_t = -np.inf
        while not stopped and t_lo < horizon:
            t_hi = min(t_lo + dt, horizon)
            n, buf_t, buf_k, buf_e = fill_chunk(state, rate, family, entity, nxt, label, count,
                                                edge_src, a, b, t_hi, buf_t, buf_k, buf_e)
            t, kk, ee, last_t = order_chunk(buf_t, buf_k, buf_e, n, last_t, t_lo, t_hi)
            for i in range(n):
                touched = -1
                for k in range(K):
                    site, old = apply_mark(procs[k], roles[k], cur[k], kk[i], ee[i], edge_src, edge_dst)
                    if site >= 0:
                        touched = site
                        new = cur[k, site]
                        if new == 1:
                            fert[k] += 1
                        elif old == 1:
                            fert[k] -= 1
                            if fert[k] == 0:
                                ext_time[si, k] = t[i]
                # the order is checked once every process has read the mark
                if K > 1 and touched >= 0:
                    bad = _check_site(order, cur, K, touched)
                    if bad > 0:
                        if viol == 0:
                            first_viol[si, 0] = t[i]
                            first_viol[si, 1] = touched
                            first_viol[si, 2] = _first_bad_pair(order, cur, K, touched)
                            first_viol[si, 3] = kk[i]
                            first_viol[si, 4] = ee[i]
                        viol += bad
                if early_stop:
                    tot = 0
                    for k in range(K):
                        tot += fert[k]
                    if tot == 0 and viol == 0:
                        stopped = True
                        break
            t_lo = t_hi
        for k in range(K):
            alive[si, k] = fert[k] > 0
            if fert[k] > 0:
                ext_time[si, k] = np.inf
        n_viol[si] = viol
    return alive, ext_time, n_viol, first_viol


@nb.njit(cache=True)
def replay_chain(times, kinds, ents, edge_src, edge_dst, procs, roles, inits, order,
                 snap_times, track_until, max_records):
    """Replay a materialized timeline for K chained processes.

    Returns snapshots (state just after the last mark <= t), final states, extinction times,
    the number of order violations with up to ``max_records`` records
    (time, site, k, lower state, upper state), and for each process the mask of sites
    occupied by a 1 at some time <= ``track_until``.
    """
    K, V = inits.shape
    cur = inits.copy()
    n_snap = snap_times.size
    snaps = np.zeros((n_snap, K, V), dtype=np.int8)
    ever = cur == 1
    ext = np.full(K, np.inf)
    fert = np.zeros(K, dtype=np.int64)
    for k in range(K):
        for v in range(V):
            if cur[k, v] == 1:
                fert[k] += 1
        if fert[k] == 0:
            ext[k] = 0.0
    records = np.full((max_records, 5), np.nan)
    n_viol = 0
    si = 0
    n = times.size
    for i in range(n):
        while si < n_snap and snap_times[si] < times[i]:
            snaps[si] = cur
            si += 1
        touched = -1
        for k in range(K):
            site, old = apply_mark(procs[k], roles[k], cur[k], kinds[i], ents[i], edge_src, edge_dst)
            if site >= 0:
                touched = site
                new = cur[k, site]
                if new == 1:
                    fert[k] += 1
                    if times[i] <= track_until:
                        ever[k, site] = True
                elif old == 1:
                    fert[k] -= 1
                    if fert[k] == 0:
                        ext[k] = times[i]
        if K > 1 and touched >= 0:
            for j in range(K - 1):
                if not state_leq(order, cur[j, touched], cur[j + 1, touched]):
                    if n_viol < max_records:
                        records[n_viol, 0] = times[i]
                        records[n_viol, 1] = touched
                        records[n_viol, 2] = j
                        records[n_viol, 3] = cur[j, touched]
                        records[n_viol, 4] = cur[j + 1, touched]
                    n_viol += 1
    while si < n_snap:
        snaps[si] = cur
        si += 1
    for k in range(K):
        if fert[k] > 0:
            ext[k] = np.inf
    return snaps, cur, ext, n_viol, records, ever


# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Trajectory:
    initial: Configuration
    kind: ProcessKind
    timeline: EventTimeline
    snapshot_times: tuple[float, ...]
    snapshots: tuple[Configuration, ...]
    final: Configuration
    extinction_time: float | None

    @property
    def fertile_count(self) -> int:
        return self.final.fertile_count

    @property
    def sterile_count(self) -> int:
        return self.final.sterile_count

    def fertile_extent(self) -> list[tuple[tuple[int, ...], tuple[int, ...]] | None]:
        """Per snapshot: (lowest, highest) coordinate of fertile sites along each axis."""
        out = []
        for snap in self.snapshots:
            idx = np.flatnonzero(snap.states == 1)
            if idx.size == 0:
                out.append(None)
                continue
            c = snap.box.coords[idx]
            out.append((tuple(int(v) for v in c.min(axis=0)), tuple(int(v) for v in c.max(axis=0))))
        return out

    def at(self, t: float) -> Configuration:
        return self.snapshots[self.snapshot_times.index(t)]


def _validate_initial(initial: Configuration, kind: ProcessKind, timeline: EventTimeline) -> None:
    if initial.box != timeline.box:
        raise ValueError(f"initial configuration lives on {initial.box}, timeline on {timeline.box}")
    if kind is ProcessKind.Contact and np.any(initial.states == -1):
        raise ValueError("the contact process cannot start from a configuration containing -1")


def _prepare_snaps(snapshot_times: Sequence[float], horizon: float) -> np.ndarray:
    snaps = np.asarray(sorted(float(t) for t in snapshot_times), dtype=np.float64)
    if snaps.size and (snaps[0] < 0 or snaps[-1] > horizon):
        raise ParameterError(f"snapshot times must lie in [0, {horizon}]")
    return snaps


def evolve(initial: Configuration, kind: ProcessKind | str, timeline: EventTimeline,
           snapshot_times: Sequence[float] = (), roles: np.ndarray | None = None) -> Trajectory:
    kind = ProcessKind.parse(kind)
    _validate_initial(initial, kind, timeline)
    snaps = _prepare_snaps(snapshot_times, timeline.horizon)
    lay = timeline.layout
    roles = BASE_ROLES if roles is None else np.asarray(roles, dtype=np.int8)
    out, final, ext, _, _, _ = replay_chain(
        timeline.times, timeline.kinds, timeline.entities, lay.edge_src, lay.edge_dst,
        np.array([kind.code], dtype=np.int64), roles.reshape(1, 6),
        initial.states.reshape(1, -1).astype(np.int8), ORDER_NEG_FIRST, snaps, -1.0, 1)
    box = initial.box
    return Trajectory(initial, kind, timeline, tuple(float(t) for t in snaps),
                      tuple(Configuration(box, out[i, 0]) for i in range(snaps.size)),
                      Configuration(box, final[0]),
                      None if math.isinf(ext[0]) else float(ext[0]))


def reachable_set(initial: Configuration, kind: ProcessKind | str, timeline: EventTimeline,
                  t: float) -> set[tuple[int, ...]]:
    """Sites in state 1 at time ``t`` (by direct replay)."""
    return evolve(initial, kind, timeline, [t]).snapshots[0].fertile_sites()


def active_path_endpoints(initial: Configuration, timeline: EventTimeline, t: float
                          ) -> set[tuple[int, ...]]:
    """Contact process only: sites y with an active path from A(initial) x {0} to (y, t).

    Independent of the forward replay: for each y a backward search walks the marks in
    decreasing time, following fertile arrows in reverse and cutting time lines at crosses.
    """
    if np.any(initial.states == -1):
        raise ValueError("active paths are defined here for {0,1} initial configurations")
    lay = timeline.layout
    sources = set(np.flatnonzero(initial.states == 1).tolist())
    marks = [(float(tm), int(k), int(e)) for tm, k, e in
             zip(timeline.times, timeline.kinds, timeline.entities) if tm <= t]
    marks.reverse()
    out = set()
    for y in range(initial.box.volume):
        frontier = {y}
        for tm, k, e in marks:
            if not frontier:
                break
            if k == StreamKind.DeathFertile:
                frontier.discard(e)
            elif k == StreamKind.BirthFertile:
                src, dst = int(lay.edge_src[e]), int(lay.edge_dst[e])
                if dst in frontier and src >= 0:
                    frontier.add(src)
        if frontier & sources:
            out.add(initial.box.site(y))
    return out


def default_initial(box: Box) -> Configuration:
    """Single fertile individual at the origin (or the box centre if the origin is outside)."""
    origin = tuple(0 for _ in range(box.d))
    if not box.contains(origin):
        origin = tuple((a + b) // 2 for a, b in zip(box.lo, box.hi))
    return Configuration.from_sites(box, [origin])


def chunk_marks_default() -> int:
    return 2048


def run_survival(kind: ProcessKind | str, lam: float, p: float, box: Box, rule, T: float,
                 seeds: np.ndarray, initial: Configuration | None = None,
                 early_stop: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Per-seed (alive at T, fertile extinction time) for one process."""
    kind = ProcessKind.parse(kind)
    if initial is None:
        initial = default_initial(box)
    if initial.box != box:
        raise ValueError("initial configuration must live on the simulation box")
    if kind is ProcessKind.Contact and np.any(initial.states == -1):
        raise ValueError("the contact process cannot start from a configuration containing -1")
    if not (T > 0 and lam >= 0 and 0 <= p <= 1):
        raise ParameterError(f"invalid parameters lam={lam} p={p} T={T}")
    lay = arrow_layout(box, rule)
    seeds = np.asarray([_check_seed(s) for s in np.atleast_1d(seeds)], dtype=np.int64)
    alive, ext, _, _ = run_chain_batch(
        seeds, lay.edge_key, lay.site_key, lay.edge_src, lay.edge_dst, float(lam), 0.0,
        float(p), float(p), float(T), np.array([kind.code], dtype=np.int64), BASE_ROLES.reshape(1, 6),
        initial.states.reshape(1, -1).astype(np.int8), ORDER_NEG_FIRST, early_stop,
        float(chunk_marks_default()), 0.0 if kind is ProcessKind.Contact else 1.0)
    return alive[:, 0], ext[:, 0]


@nb.njit(cache=True)
def _hit_batch(seeds, edge_key, site_key, edge_src, edge_dst, lam, p, horizon, proc, init, target):
    n = seeds.size
    hit = np.zeros(n, dtype=np.bool_)
    dead = np.zeros(n, dtype=np.bool_)
    for si in range(n):
        t, kinds, ents = materialize(seeds[si], edge_key, site_key, edge_src, lam, 0.0, p, p, horizon)
        cur = init.copy()
        fert = 0
        for v in range(cur.size):
            if cur[v] == 1:
                fert += 1
                if target[v]:
                    hit[si] = True
        i = 0
        while fert > 0 and not hit[si] and i < t.size:
            site, old = apply_mark(proc, BASE_ROLES, cur, kinds[i], ents[i], edge_src, edge_dst)
            if site >= 0:
                if cur[site] == 1:
                    fert += 1
                    if target[site]:
                        hit[si] = True
                elif old == 1:
                    fert -= 1
            i += 1
        dead[si] = fert == 0
    return hit, dead


def hit_before_extinction(kind: ProcessKind | str, lam: float, p: float, box: Box, rule, T: float,
                          seeds: np.ndarray, initial: Configuration, target: Sequence[Sequence[int]]
                          ) -> tuple[np.ndarray, np.ndarray]:
    """Per seed: did a 1 reach ``target`` before fertile extinction, and was the outcome
    decided by ``T`` (hit or extinct)."""
    kind = ProcessKind.parse(kind)
    lay = arrow_layout(box, rule)
    mask = np.zeros(box.volume, dtype=np.bool_)
    for x in target:
        mask[box.index(x)] = True
    seeds = np.asarray([_check_seed(s) for s in np.atleast_1d(seeds)], dtype=np.int64)
    hit, dead = _hit_batch(seeds, lay.edge_key, lay.site_key, lay.edge_src, lay.edge_dst,
                           float(lam), float(p), float(T), kind.code,
                           initial.states.astype(np.int8), mask)
    return hit, hit | dead


@nb.njit(cache=True)
def _final_batch(seeds, edge_key, site_key, edge_src, edge_dst, lam, p, horizon, proc, init):
    out = np.empty((seeds.size, init.size), dtype=np.int8)
    for si in range(seeds.size):
        t, kinds, ents = materialize(seeds[si], edge_key, site_key, edge_src, lam, 0.0, p, p, horizon)
        cur = init.copy()
        for i in range(t.size):
            apply_mark(proc, BASE_ROLES, cur, kinds[i], ents[i], edge_src, edge_dst)
        out[si] = cur
    return out


def final_configurations(kind: ProcessKind | str, lam: float, p: float, box: Box, rule, T: float,
                         seeds, initial: Configuration) -> np.ndarray:
    """(n_seeds, volume) states at time T, one row per seed."""
    kind = ProcessKind.parse(kind)
    lay = arrow_layout(box, rule)
    seeds = np.asarray([_check_seed(s) for s in np.atleast_1d(seeds)], dtype=np.int64)
    return _final_batch(seeds, lay.edge_key, lay.site_key, lay.edge_src, lay.edge_dst,
                        float(lam), float(p), float(T), kind.code, initial.states.astype(np.int8))


def binomial_stderr(k: int, n: int) -> float:
    q = k / n
    return math.sqrt(q * (1.0 - q) / n)


def survival_proxy(kind: ProcessKind | str, lam: float, p: float, box: Box, rule, T: float,
                   n_trials: int, seed0: int, initial: Configuration | None = None
                   ) -> tuple[float, float]:
    """Fraction of seeds ``seed0 .. seed0+n_trials-1`` with a fertile site alive at ``T``."""
    if n_trials < 1:
        raise ParameterError("n_trials must be >= 1")
    seeds = np.arange(int(seed0), int(seed0) + int(n_trials), dtype=np.int64)
    alive, _ = run_survival(kind, lam, p, box, rule, T, seeds, initial)
    k = int(alive.sum())
    return k / n_trials, binomial_stderr(k, n_trials)
