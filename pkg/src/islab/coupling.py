"""Basic couplings on shared marks and their pathwise order audits.

The lower process sits at index 0 of a chain and the upper one at index 1; the sitewise
order between them is checked after every mark.  Rate tables of the three couplings are
exposed as plain functions so that single transitions can be audited against short
replays from frozen configurations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numba as nb
import numpy as np

from .dynamics import (BASE_ROLES, CONTACT, IS, ORDER_NEG_FIRST, ORDER_PARTIAL,
                       ORDER_ZERO_FIRST, SPLIT_LOWER_ROLES, SPLIT_UPPER_ROLES, SPONT, ProcessKind,
                       Trajectory, apply_mark, chunk_marks_default, replay_chain, run_chain_batch,
                       state_leq)
from .events import (EventTimeline, ParameterError, SplitTimeline, StreamKind, _check_seed,
                     arrow_layout, generate_split_timeline, generate_timeline, materialize)
from .lattice import Box, BoundaryRule, Configuration


class CouplingError(ValueError):
    """Initial configurations violate the order the coupling is meant to preserve."""


ORDER_NAMES = {"neg-first": ORDER_NEG_FIRST, "zero-first": ORDER_ZERO_FIRST,
               "partial": ORDER_PARTIAL}


def parse_order(order) -> int:
    if isinstance(order, (int, np.integer)) and int(order) in ORDER_NAMES.values():
        return int(order)
    try:
        return ORDER_NAMES[str(order)]
    except KeyError:
        raise ValueError(f"unknown order {order!r}; expected one of {sorted(ORDER_NAMES)}") from None


def leq(order, a: int, b: int) -> bool:
    return bool(state_leq(parse_order(order), int(a), int(b)))


def config_leq(lower: Configuration, upper: Configuration, order=ORDER_NEG_FIRST) -> bool:
    o = parse_order(order)
    return all(state_leq(o, int(a), int(b)) for a, b in zip(lower.states, upper.states))


PAIRS = {
    "is-contact": ((IS, CONTACT), (BASE_ROLES, BASE_ROLES)),
    "spont-is": ((SPONT, IS), (BASE_ROLES, BASE_ROLES)),
    "spont-spont": ((SPONT, SPONT), (SPLIT_LOWER_ROLES, SPLIT_UPPER_ROLES)),
}


@dataclass(frozen=True)
class Violation:
    time: float
    site: tuple[int, ...]
    lower: int
    upper: int


@dataclass(frozen=True, eq=False)
class CoupledPair:
    kinds: tuple[str, str]
    order: int
    timeline: EventTimeline
    lower: Trajectory
    upper: Trajectory
    violations: tuple[Violation, ...] = field(default=())

    @property
    def ordered(self) -> bool:
        return not self.violations


def _couple(pair: str, lower0: Configuration, upper0: Configuration, timeline: EventTimeline,
            snapshot_times: Sequence[float], max_records: int = 1000) -> CoupledPair:
    procs, roles = PAIRS[pair]
    if lower0.box != timeline.box or upper0.box != timeline.box:
        raise ValueError("initial configurations must live on the timeline's box")
    if not config_leq(lower0, upper0):
        raise CouplingError(f"{pair}: initial configurations are not ordered (-1 < 0 < 1)")
    names = [ProcessKind.Contact, ProcessKind.IS, ProcessKind.Spont]
    kinds = (names[procs[0]], names[procs[1]])
    for k, cfg in zip(kinds, (lower0, upper0)):
        if k is ProcessKind.Contact and np.any(cfg.states == -1):
            raise CouplingError("the contact process cannot start from a configuration containing -1")
    snaps = np.asarray(sorted(float(t) for t in snapshot_times), dtype=np.float64)
    if snaps.size and (snaps[0] < 0 or snaps[-1] > timeline.horizon):
        raise ParameterError(f"snapshot times must lie in [0, {timeline.horizon}]")
    lay = timeline.layout
    inits = np.stack([lower0.states, upper0.states]).astype(np.int8)
    out, final, ext, n_viol, records, _ = replay_chain(
        timeline.times, timeline.kinds, timeline.entities, lay.edge_src, lay.edge_dst,
        np.asarray(procs, dtype=np.int64), np.stack(roles), inits, ORDER_NEG_FIRST, snaps, -1.0,
        max_records)
    box = timeline.box
    trajs = []
    for k in range(2):
        trajs.append(Trajectory(
            (lower0, upper0)[k], kinds[k], timeline, tuple(float(t) for t in snaps),
            tuple(Configuration(box, out[i, k]) for i in range(snaps.size)),
            Configuration(box, final[k]), None if math.isinf(ext[k]) else float(ext[k])))
    viols = tuple(Violation(float(r[0]), box.site(int(r[1])), int(r[3]), int(r[4]))
                  for r in records[:min(n_viol, max_records)])
    return CoupledPair((kinds[0].value, kinds[1].value), ORDER_NEG_FIRST, timeline, trajs[0],
                       trajs[1], viols)


def couple_is_contact(eta0: Configuration, zeta0: Configuration, lam: float, p: float,
                      timeline: EventTimeline, snapshot_times: Sequence[float] = ()) -> CoupledPair:
    """IS(lam, p) below Contact(lam p) on the same marks."""
    _match_params(timeline, lam, p)
    return _couple("is-contact", eta0, zeta0, timeline, snapshot_times)


def couple_spont_is(xi0: Configuration, eta0: Configuration, lam: float, p: float,
                    timeline: EventTimeline, snapshot_times: Sequence[float] = ()) -> CoupledPair:
    """Spont(lam, p) below IS(lam, p) on the same marks."""
    _match_params(timeline, lam, p)
    return _couple("spont-is", xi0, eta0, timeline, snapshot_times)


def couple_spont_spont(xi1: Configuration, xi2: Configuration, lam: float, p1: float, p2: float,
                       split: SplitTimeline, snapshot_times: Sequence[float] = ()) -> CoupledPair:
    """Spont(lam, p1) below Spont(lam, p2) on a split timeline."""
    if p1 > p2:
        raise ParameterError(f"need p1 <= p2, got p1={p1} > p2={p2}")
    if (split.p1, split.p2) != (float(p1), float(p2)):
        raise ParameterError("split timeline was generated for different (p1, p2)")
    _match_params(split.timeline, lam, None)
    return _couple("spont-spont", xi1, xi2, split.timeline, snapshot_times)


def _match_params(tl: EventTimeline, lam: float, p: float | None) -> None:
    if tl.lam != float(lam) or (p is not None and tl.p != float(p)):
        raise ParameterError(f"timeline was generated for (lam, p)=({tl.lam}, {tl.p})")


# ---------------------------------------------------------------------------
# many-seed surveys

@dataclass(frozen=True, eq=False)
class CouplingSurvey:
    pair: str
    seeds: np.ndarray
    violations: np.ndarray
    extinct_lower: np.ndarray
    extinct_upper: np.ndarray
    first_violation: np.ndarray

    @property
    def total_violations(self) -> int:
        return int(self.violations.sum())

    def rows(self):
        for s, v, a, b in zip(self.seeds, self.violations, self.extinct_lower, self.extinct_upper):
            yield int(s), int(v), int(a), int(b)


def chain_params(pair: str, lam: float, p: float, p2: float | None):
    """(rate_arrow, rate_aux, label cut a, label cut b) for the chain's timeline."""
    if pair == "spont-spont":
        if p2 is None or p > p2:
            raise ParameterError("spont-spont needs p1 <= p2")
        return lam, lam * (p2 - p), p, p2
    return lam, 0.0, p, p


def survey_coupling(pair: str, lam: float, p: float, box: Box, rule, T: float, seeds,
                    lower0: Configuration | None = None, upper0: Configuration | None = None,
                    p2: float | None = None) -> CouplingSurvey:
    """Run a coupling over many seeds; extinction ends a replay early (the order can no
    longer break once neither process holds a 1)."""
    if pair not in PAIRS:
        raise ValueError(f"unknown pair {pair!r}")
    from .dynamics import default_initial
    lower0 = default_initial(box) if lower0 is None else lower0
    upper0 = lower0 if upper0 is None else upper0
    if not config_leq(lower0, upper0):
        raise CouplingError("initial configurations are not ordered (-1 < 0 < 1)")
    procs, roles = PAIRS[pair]
    rate_arrow, rate_aux, a, b = chain_params(pair, float(lam), float(p), p2)
    lay = arrow_layout(box, rule)
    seeds = np.asarray([_check_seed(s) for s in np.atleast_1d(seeds)], dtype=np.int64)
    alive, _, n_viol, first = run_chain_batch(
        seeds, lay.edge_key, lay.site_key, lay.edge_src, lay.edge_dst, float(rate_arrow),
        float(rate_aux), float(a), float(b), float(T), np.asarray(procs, dtype=np.int64),
        np.stack(roles), np.stack([lower0.states, upper0.states]).astype(np.int8),
        ORDER_NEG_FIRST, True, float(chunk_marks_default()))
    return CouplingSurvey(pair, seeds, n_viol, ~alive[:, 0], ~alive[:, 1], first)


# ---------------------------------------------------------------------------
# coupled rate tables at a single site x

def rates_is_contact(eta_x: int, zeta_x: int, n1_eta: int, n1_zeta: int, lam: float, p: float
                     ) -> dict[tuple[int, int], float]:
    fert, ster = lam * p, lam * (1 - p)
    table = {
        (1, 1): {(0, 0): 1.0},
        (0, 1): {(0, 0): 1.0, (1, 1): fert * n1_eta, (-1, 1): ster * n1_eta},
        (0, 0): {(1, 1): fert * n1_eta, (0, 1): fert * (n1_zeta - n1_eta),
                 (-1, 0): ster * n1_eta},
        (-1, 1): {(0, 1): 1.0, (-1, 0): 1.0},
        (-1, 0): {(-1, 1): fert * n1_zeta, (0, 0): 1.0},
    }
    return _positive(table[(eta_x, zeta_x)])


def rates_spont_is(xi_x: int, eta_x: int, n1_xi: int, n1_eta: int, lam: float, p: float,
                   in_degree: int) -> dict[tuple[int, int], float]:
    """``in_degree`` replaces 2d; with ghost arrows it equals 2d at every site."""
    fert, ster = lam * p, lam * (1 - p)
    table = {
        (0, 0): {(1, 1): fert * n1_xi, (0, 1): fert * (n1_eta - n1_xi),
                 (-1, -1): ster * n1_eta, (-1, 0): ster * (in_degree - n1_eta)},
        (0, 1): {(0, 0): 1.0, (-1, 1): in_degree * ster, (1, 1): fert * n1_xi},
        (-1, 1): {(-1, 0): 1.0, (0, 1): 1.0},
        (-1, -1): {(0, 0): 1.0},
        (-1, 0): {(0, 0): 1.0, (-1, 1): fert * n1_eta, (-1, -1): ster * n1_eta},
        (1, 1): {(0, 0): 1.0},
    }
    return _positive(table[(xi_x, eta_x)])


def rates_spont_spont(lo_x: int, up_x: int, n1_lo: int, n1_up: int, lam: float, p1: float,
                      p2: float, in_degree: int) -> dict[tuple[int, int], float]:
    table = {
        (0, 0): {(1, 1): lam * p1 * n1_lo, (0, 1): lam * p2 * n1_up - lam * p1 * n1_lo,
                 (-1, -1): in_degree * lam * (1 - p2), (-1, 0): in_degree * lam * (p2 - p1)},
        (0, 1): {(0, 0): 1.0, (-1, 1): in_degree * lam * (1 - p1), (1, 1): lam * p1 * n1_lo},
        (-1, 1): {(-1, 0): 1.0, (0, 1): 1.0},
        (-1, -1): {(0, 0): 1.0},
        # the upper process is blocked only by its own sterile stream
        (-1, 0): {(0, 0): 1.0, (-1, 1): lam * p2 * n1_up, (-1, -1): in_degree * lam * (1 - p2)},
        (1, 1): {(0, 0): 1.0},
    }
    return _positive(table[(lo_x, up_x)])


def _positive(d: dict) -> dict:
    return {k: float(v) for k, v in d.items() if v > 0}


@nb.njit(cache=True)
def _first_change_batch(seeds, edge_key, site_key, edge_src, edge_dst, rate_arrow, rate_aux,
                        a, b, horizon, procs, roles, inits, x):
    n = seeds.size
    out = np.empty((n, 2), dtype=np.int8)
    changed = np.zeros(n, dtype=np.bool_)
    tgt_is_edge = np.array([True, True, False, False, True, True])
    for si in range(n):
        t, kinds, ents = materialize(seeds[si], edge_key, site_key, edge_src, rate_arrow,
                                     rate_aux, a, b, horizon)
        cur = inits.copy()
        for i in range(t.size):
            k = kinds[i]
            tgt = edge_dst[ents[i]] if tgt_is_edge[k] else ents[i]
            if tgt != x:
                continue
            hit = False
            for j in range(2):
                site, _ = apply_mark(procs[j], roles[j], cur[j], k, ents[i], edge_src, edge_dst)
                if site >= 0:
                    hit = True
            if hit:
                changed[si] = True
                break
        out[si, 0] = cur[0, x]
        out[si, 1] = cur[1, x]
    return out, changed


def one_step_audit(pair: str, lower: Configuration, upper: Configuration, site: Sequence[int],
                   lam: float, p: float, trials: int, seed0: int, p2: float | None = None,
                   rule=BoundaryRule.ABSORBING) -> dict:
    """Empirical first transition at ``site`` with every other site frozen, against the
    coupled rate table.

    Returns ``{outcome: (count, expected probability, stderr)}`` plus the ``None`` outcome
    (no transition inside the window).
    """
    box = lower.box
    lay = arrow_layout(box, rule)
    x = box.index(site)
    nbr = lay.edge_src[(lay.edge_dst == x) & (lay.edge_src >= 0)]
    n1_lo = int(np.count_nonzero(lower.states[nbr] == 1))
    n1_up = int(np.count_nonzero(upper.states[nbr] == 1))
    deg = int(np.count_nonzero(lay.edge_dst == x))
    lo_x, up_x = int(lower.states[x]), int(upper.states[x])
    if pair == "is-contact":
        rates = rates_is_contact(lo_x, up_x, n1_lo, n1_up, lam, p)
    elif pair == "spont-is":
        rates = rates_spont_is(lo_x, up_x, n1_lo, n1_up, lam, p, deg)
    elif pair == "spont-spont":
        rates = rates_spont_spont(lo_x, up_x, n1_lo, n1_up, lam, p, p2, deg)
    else:
        raise ValueError(f"unknown pair {pair!r}")
    total = sum(rates.values())
    horizon = 40.0 / total if total > 0 else 1.0
    procs, roles = PAIRS[pair]
    rate_arrow, rate_aux, a, b = chain_params(pair, float(lam), float(p), p2)
    seeds = np.arange(int(seed0), int(seed0) + int(trials), dtype=np.int64)
    out, changed = _first_change_batch(
        seeds, lay.edge_key, lay.site_key, lay.edge_src, lay.edge_dst, float(rate_arrow),
        float(rate_aux), float(a), float(b), float(horizon), np.asarray(procs, dtype=np.int64),
        np.stack(roles), np.stack([lower.states, upper.states]).astype(np.int8), x)
    p_any = 1.0 - math.exp(-total * horizon)
    report = {}
    outcomes = set(rates) | {(int(u), int(v)) for u, v in out[changed]}
    for o in sorted(outcomes):
        cnt = int(np.count_nonzero(changed & (out[:, 0] == o[0]) & (out[:, 1] == o[1])))
        q = rates.get(o, 0.0) / total * p_any if total > 0 else 0.0
        report[o] = (cnt, q, math.sqrt(q * (1 - q) / trials))
    q = 1.0 - p_any
    report[None] = (int(np.count_nonzero(~changed)), q, math.sqrt(q * (1 - q) / trials))
    return report


# ---------------------------------------------------------------------------
# IS basic coupling without order preservation

@dataclass(frozen=True)
class OrderWitness:
    order: int
    seed: int
    lower0: Configuration
    upper0: Configuration
    time: float
    mark: tuple[str, int]
    site: tuple[int, ...]
    states: tuple[int, int]


def witness_configurations(order) -> tuple[Configuration, Configuration]:
    """Two-site configurations (x=0, y=1) from which one mark breaks the order."""
    o = parse_order(order)
    box = Box((0,), (1,))
    if o == ORDER_ZERO_FIRST:
        return (Configuration(box, np.array([1, 0])), Configuration(box, np.array([1, -1])))
    return (Configuration(box, np.array([0, 0])), Configuration(box, np.array([1, 0])))


def find_order_violation_is(order, lam: float, p: float, search_budget: int = 1000,
                            seed0: int = 0, horizon: float = 1.0) -> OrderWitness | None:
    """Replay the IS/IS basic coupling from the witness configurations until the order breaks."""
    o = parse_order(order)
    lower0, upper0 = witness_configurations(o)
    box = lower0.box
    lay = arrow_layout(box, BoundaryRule.ABSORBING)
    procs = np.array([IS, IS], dtype=np.int64)
    roles = np.stack([BASE_ROLES, BASE_ROLES])
    inits = np.stack([lower0.states, upper0.states]).astype(np.int8)
    for seed in range(int(seed0), int(seed0) + int(search_budget)):
        tl = generate_timeline(box, BoundaryRule.ABSORBING, lam, p, horizon, seed)
        _, _, _, n_viol, rec, _ = replay_chain(tl.times, tl.kinds, tl.entities, lay.edge_src,
                                               lay.edge_dst, procs, roles, inits, o,
                                               np.empty(0), -1.0, 1)
        if n_viol:
            t = float(rec[0, 0])
            i = int(np.searchsorted(tl.times, t))
            kind = StreamKind(int(tl.kinds[i]))
            return OrderWitness(o, seed, lower0, upper0, t, (kind.name, int(tl.entities[i])),
                                box.site(int(rec[0, 1])), (int(rec[0, 3]), int(rec[0, 4])))
    return None
