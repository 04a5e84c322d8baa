"""Block construction: the set H, block events, good events and wet sites.

Geometry (per dimension d): R = [-8N, 8N]^d x [0, T], I = [-2N, 2N]^d, T1 = N / (2 alpha1),
T = 3N / alpha'.  "Survives forever" is replaced by survival up to ``horizon_mult * T`` and the
all-ones configuration of Z^d by the all-ones configuration of the simulation box.

Inner Monte Carlo seeds of an H test depend only on (outer seed, level, block, translate),
so the same block is judged on the same randomness wherever it is evaluated, and the
verdict is pathwise monotone in the configuration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import dynamics as dyn
from .dynamics import (BASE_ROLES, CONTACT, ORDER_FERTILE, ORDER_NEG_FIRST, SPONT, ProcessKind,
                       binomial_stderr, replay_chain, run_survival)
from .events import (EventTimeline, ParameterError, derive_seed, generate_timeline, restrict)
from .lattice import Box, BoundaryRule, Configuration, ContainmentError
from .percolation import EvenLattice, PercolationField, cluster_from_origin, site_uniforms

WILSON_Z = 3.0
_SEED_MASK = (1 << 62) - 1


class GeometryError(ValueError):
    pass


class CalibrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class BlockGeometry:
    N: int
    K: int
    d: int
    alpha1: float
    alpha2: float
    alpha_prime: float | None = None
    k: int = 8

    def __post_init__(self):
        if self.N < 1 or not 1 <= self.K <= self.N:
            raise GeometryError(f"need 1 <= K <= N, got K={self.K} N={self.N}")
        if self.d < 1 or self.alpha1 <= 0 or self.alpha2 <= 0:
            raise GeometryError("dimension and speeds must be positive")
        ap = min(6 * self.alpha1, self.alpha2) if self.alpha_prime is None else self.alpha_prime
        if not 0 < ap <= min(6 * self.alpha1, self.alpha2):
            raise GeometryError(f"alpha' must lie in (0, min(6 alpha1, alpha2)], got {ap}")
        object.__setattr__(self, "alpha_prime", float(ap))
        if not self.T1 < self.T:
            raise GeometryError(f"T1={self.T1} must be smaller than T={self.T}; "
                                "this needs alpha' < 6 alpha1")

    @property
    def T1(self) -> float:
        return self.N / (2 * self.alpha1)

    @property
    def T(self) -> float:
        return 3 * self.N / self.alpha_prime

    @property
    def T2(self) -> float:
        return self.T - self.T1

    @property
    def j(self) -> int:
        return math.floor(3 / self.alpha_prime) + 1

    @property
    def M(self) -> int:
        return max(self.k, self.j)

    def R_box(self, center: Sequence[int] | None = None) -> Box:
        return _centered(self.d, 8 * self.N, center)

    def I_box(self, center: Sequence[int] | None = None) -> Box:
        return _centered(self.d, 2 * self.N, center)

    def to_json(self) -> dict:
        return {"N": self.N, "K": self.K, "d": self.d, "alpha1": self.alpha1,
                "alpha2": self.alpha2, "alpha_prime": self.alpha_prime, "T1": self.T1,
                "T": self.T, "T2": self.T2, "k": self.k, "j": self.j, "M": self.M}


def _centered(d: int, half: int, center: Sequence[int] | None) -> Box:
    c = (0,) * d if center is None else tuple(int(v) for v in center)
    return Box(tuple(v - half for v in c), tuple(v + half for v in c))


def e1_shift(m: int, d: int, N: int) -> tuple[int, ...]:
    return (2 * m * N,) + (0,) * (d - 1)


def restrict_config(xi: Configuration, A: Box | None) -> Configuration:
    """xi on A, 0 elsewhere (same box as xi)."""
    if A is None:
        return Configuration.empty(xi.box)
    if not xi.box.contains_box(A):
        raise ContainmentError(f"{A} is not contained in {xi.box}")
    lo, hi = np.asarray(A.lo), np.asarray(A.hi)
    inside = np.all((xi.box.coords >= lo) & (xi.box.coords <= hi), axis=1)
    return Configuration(xi.box, np.where(inside, xi.states, 0))


def wilson_interval(k: int, n: int, z: float = WILSON_Z) -> tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    q = k / n
    den = 1 + z * z / n
    mid = (q + z * z / (2 * n)) / den
    half = z * math.sqrt(q * (1 - q) / n + z * z / (4 * n * n)) / den
    return max(0.0, mid - half), min(1.0, mid + half)


# ---------------------------------------------------------------------------
# the set H

@dataclass(frozen=True)
class HMembership:
    verdict: str                      # "in_H", "not_in_H" or "undecided"
    center: tuple[int, ...] | None    # centre of the translate that decided
    estimate: float
    stderr: float
    interval: tuple[float, float]
    trials: int
    reason: str

    @property
    def member(self) -> bool:
        return self.verdict == "in_H"


@dataclass(frozen=True)
class HSettings:
    lam: float
    p: float
    gamma: float
    trials: int = 100
    horizon_mult: float = 1.0
    margin: int | None = None      # half-width added around a translate; default 8N
    stride: int | None = None      # translate stride; default K


def h_membership(xi: Configuration, geom: BlockGeometry, settings: HSettings, seed: int,
                 center: Sequence[int] | None = None, tag: Sequence[int] = (0, 0)
                 ) -> HMembership:
    """Is xi, recentred at ``center``, in H?

    (a) no -1 in centre + I; (b) some translate C of [-K, K]^d inside centre + [-N, N]^d from
    which Contact(lam p) started at xi|C is alive at ``horizon_mult * T`` with frequency
    significantly above 1 - gamma/2 (Wilson interval, z = 3).  ``tag`` names the block for
    seed derivation.
    """
    N, K, d = geom.N, geom.K, geom.d
    c0 = (0,) * d if center is None else tuple(int(v) for v in center)
    box = xi.box
    I = geom.I_box(c0)
    if not box.contains_box(I):
        raise ContainmentError(f"configuration box {box} does not cover {I}")
    lo, hi = np.asarray(I.lo), np.asarray(I.hi)
    in_I = np.all((box.coords >= lo) & (box.coords <= hi), axis=1)
    if np.any(xi.states[in_I] == -1):
        return HMembership("not_in_H", None, 0.0, 0.0, (0.0, 0.0), 0, "-1 inside I")
    thresh = 1.0 - settings.gamma / 2.0
    stride = settings.stride or K
    margin = 8 * N if settings.margin is None else settings.margin
    T_surv = settings.horizon_mult * geom.T
    offsets = range(-(N - K), N - K + 1, stride)
    best = None
    all_below = True
    for idx, off in enumerate(_product(offsets, d)):
        c = tuple(a + b for a, b in zip(c0, off))
        C = _centered(d, K, c)
        sim = _centered(d, K + margin, c)
        init = Configuration.from_sites(sim, fertile=[x for x in C.sites()
                                                      if box.contains(x) and xi[x] == 1])
        if init.fertile_count == 0:
            k, n = 0, settings.trials
        else:
            s0 = derive_seed(seed, "H", *tag, idx) & _SEED_MASK
            alive, _ = run_survival(ProcessKind.Contact, settings.lam, settings.p, sim,
                                    BoundaryRule.ABSORBING, T_surv,
                                    np.arange(s0, s0 + settings.trials, dtype=np.int64), init)
            k, n = int(alive.sum()), settings.trials
        lo_w, hi_w = wilson_interval(k, n)
        est = k / n
        if best is None or est > best[1]:
            best = (c, est, binomial_stderr(k, n), (lo_w, hi_w))
        if lo_w > thresh:
            return HMembership("in_H", c, est, binomial_stderr(k, n), (lo_w, hi_w), n,
                               "surviving translate")
        if hi_w >= thresh:
            all_below = False
    c, est, se, ci = best
    if all_below:
        return HMembership("not_in_H", c, est, se, ci, settings.trials,
                           "no translate survives often enough")
    return HMembership("undecided", c, est, se, ci, settings.trials,
                       "confidence interval straddles the threshold")


def _product(offsets, d):
    import itertools
    return itertools.product(offsets, repeat=d)


# ---------------------------------------------------------------------------
# block events

@dataclass(frozen=True)
class Estimate:
    estimate: float
    stderr: float
    count: int
    trials: int

    @classmethod
    def of(cls, flags: np.ndarray) -> "Estimate":
        n = int(flags.size)
        k = int(np.count_nonzero(flags))
        return cls(k / n if n else float("nan"), binomial_stderr(k, n) if n else float("nan"), k, n)

    def to_json(self) -> dict:
        return {"estimate": self.estimate, "stderr": self.stderr, "count": self.count,
                "trials": self.trials}


@dataclass(frozen=True, eq=False)
class BlockEventReport:
    events: dict
    closed_forms: dict
    seeds: np.ndarray
    translate: tuple[int, ...] | None
    audits: dict = field(default_factory=dict)
    per_seed: dict = field(default_factory=dict, repr=False)

    def to_json(self) -> dict:
        return {"events": {k: v.to_json() for k, v in self.events.items()},
                "closed_forms": self.closed_forms, "translate": self.translate,
                "seeds": [int(self.seeds[0]), int(self.seeds[-1])] if self.seeds.size else [],
                "trials": int(self.seeds.size), "audits": self.audits}


def e1_closed_forms(geom: BlockGeometry, lam: float, p: float) -> dict:
    """exp(-2 lam (1-p) (16N+1)^d T) and the version with the per-site rate 2 d lam (1-p)."""
    vol = (16 * geom.N + 1) ** geom.d
    base = 2 * lam * (1 - p) * vol * geom.T
    return {"without_d": math.exp(-base), "with_d": math.exp(-geom.d * base)}


def e2_closed_forms(geom: BlockGeometry, xi: Configuration) -> dict:
    R, I = geom.R_box(), geom.I_box()
    sterile = [x for x in xi.sterile_sites() if R.contains(x) and not I.contains(x)]
    ring = (16 * geom.N + 1) ** geom.d - (4 * geom.N + 1) ** geom.d
    q = 1 - math.exp(-geom.T1)
    return {"sterile_outside_I": len(sterile), "ring_sites": ring,
            "ring_sites_as_written": (12 * geom.N) ** geom.d,
            "given_E1": q ** len(sterile), "given_E1_full_ring": q ** ring}


_OUTSIDE_KIND = np.array([6, 7, 8, 9, 4, 5], dtype=np.int8)
# outside R the lower process only sees sterile marks: it stays in {-1, 0} there, which
# leaves its restriction to R unchanged and keeps the order at every site
_RESTRICTED_ROLES = np.array([
    [dyn.FERT, dyn.STER, dyn.KILL_F, dyn.KILL_S, dyn.IGNORE, dyn.IGNORE,
     dyn.IGNORE, dyn.STER, dyn.IGNORE, dyn.KILL_S],
    [dyn.FERT, dyn.STER, dyn.KILL_F, dyn.KILL_S, dyn.IGNORE, dyn.IGNORE,
     dyn.FERT, dyn.STER, dyn.KILL_F, dyn.KILL_S]], dtype=np.int8)


def restriction_audit(xi_big: Configuration, xi_R: Configuration, R: Box, tl: EventTimeline,
                      max_records: int = 10) -> int:
    """Number of (mark, site) order breaks between Spont restricted to R (started from
    ``xi_R``, zero outside R) and Spont on the whole box of ``tl`` (from ``xi_big``)."""
    lay = tl.layout
    tgt = tl.target_sites()
    lo, hi = np.asarray(R.lo), np.asarray(R.hi)
    inside = np.all((tl.box.coords >= lo) & (tl.box.coords <= hi), axis=1)
    kinds = tl.kinds.copy()
    out = ~inside[tgt]
    kinds[out] = _OUTSIDE_KIND[kinds[out]]
    inits = np.stack([xi_R.states, xi_big.states]).astype(np.int8)
    if np.any(inits[0][~inside] != 0):
        raise ValueError("restricted initial configuration must vanish outside R")
    _, _, _, n_viol, _, _ = replay_chain(
        tl.times, kinds, tl.entities, lay.edge_src, lay.edge_dst,
        np.array([SPONT, SPONT], dtype=np.int64), _RESTRICTED_ROLES, inits, ORDER_NEG_FIRST,
        np.empty(0), -1.0, max_records)
    return int(n_viol)


def block_events(xi: Configuration, geom: BlockGeometry, lam: float, p: float, trials: int,
                 seed0: int, settings: HSettings | None = None, membership: HMembership | None = None,
                 events: Sequence[str] = ("E1", "E2", "E3", "E4", "G"),
                 audit_restriction: bool = True) -> BlockEventReport:
    """Indicators of E1..E4, their intersection and G on seeds ``seed0 .. seed0+trials-1``.

    ``xi`` lives on a box containing R.  E1 counts sterile arrivals (the clock, not the
    resulting flips); E2 asks every -1 of xi in R minus I to meet a sterile death by T1; E3
    asks the contact process from xi|C never to occupy a site at sup-distance >= 2N by T1;
    E4 compares it at T with the contact process from all ones on R.
    """
    settings = settings or HSettings(lam, p, gamma=0.5)
    if membership is None:
        membership = h_membership(xi, geom, settings, seed0)
    if not membership.member:
        raise ValueError(f"configuration is not in H ({membership.verdict}: {membership.reason})")
    d, N = geom.d, geom.N
    R = geom.R_box()
    big = _centered(d, 10 * N, None) if audit_restriction else R
    if not xi.box.contains_box(R):
        raise ContainmentError(f"configuration box {xi.box} does not cover R = {R}")
    xi_big = _crop(xi, big) if xi.box.contains_box(big) else xi.embed(big)
    xi_R = restrict_config(xi_big, R)
    xi_on_R = _crop(xi_big, R)
    C = _centered(d, geom.K, membership.center)
    zeta0 = _crop(restrict_config(xi_big, C), R).states.copy()
    zeta0[zeta0 == -1] = 0
    zeta0 = Configuration(R, zeta0)
    full = Configuration.full(R, 1)
    ring = [R.index(x) for x in xi_on_R.sterile_sites() if not geom.I_box().contains(x)]
    coords = R.coords
    sup = np.max(np.abs(coords), axis=1)
    A0 = coords[zeta0.states == 1]
    if A0.size:
        dist = np.min(np.max(np.abs(coords[:, None, :] - A0[None, :, :]), axis=2), axis=1)
        e4_mask = dist <= 3 * N
    else:
        e4_mask = np.zeros(R.volume, dtype=bool)
    seeds = np.arange(int(seed0), int(seed0) + int(trials), dtype=np.int64)
    want = set(events)
    unknown = want - {"E1", "E2", "E3", "E4", "G"}
    if unknown:
        raise ValueError(f"unknown block events {sorted(unknown)}")
    all_four = {"E1", "E2", "E3", "E4"} <= want
    flags = {e: np.zeros(trials, dtype=bool) for e in ("E1", "E2", "E3", "E4", "E", "G")}
    restr_viol = np.zeros(trials, dtype=np.int64)
    diff_viol = np.zeros(trials, dtype=np.int64)
    g_viol = np.zeros(trials, dtype=np.int64)
    T, T1 = geom.T, geom.T1
    roles2 = np.stack([BASE_ROLES, BASE_ROLES])
    for i, s in enumerate(seeds):
        tl_big = generate_timeline(big, BoundaryRule.ABSORBING, lam, p, T, int(s))
        tl = restrict(tl_big, R, 0.0, T) if big != R else tl_big
        lay = tl.layout
        flags["E1"][i] = not np.any(tl.kinds == 1)
        if ring:
            early_v = np.unique(tl.entities[(tl.kinds == 3) & (tl.times <= T1)])
            flags["E2"][i] = np.all(np.isin(ring, early_v))
        else:
            flags["E2"][i] = True
        zeta_T = None
        if want & {"E3", "E4"} or all_four:
            snaps, _, _, _, _, ever = replay_chain(
                tl.times, tl.kinds, tl.entities, lay.edge_src, lay.edge_dst,
                np.array([CONTACT, CONTACT], dtype=np.int64), roles2,
                np.stack([zeta0.states, full.states]).astype(np.int8), ORDER_NEG_FIRST,
                np.array([T]), T1, 1)
            flags["E3"][i] = not np.any(ever[0] & (sup >= 2 * N))
            flags["E4"][i] = np.array_equal(snaps[0, 0][e4_mask], snaps[0, 1][e4_mask])
            zeta_T = Configuration(R, snaps[0, 0])
        flags["E"][i] = all_four and flags["E1"][i] and flags["E2"][i] and flags["E3"][i] \
            and flags["E4"][i]
        xi_T = None
        if all_four or "G" in want:
            _, fin, _, n_dv, _, _ = replay_chain(
                tl.times, tl.kinds, tl.entities, lay.edge_src, lay.edge_dst,
                np.array([CONTACT, SPONT], dtype=np.int64), roles2,
                np.stack([zeta0.states, xi_on_R.states]).astype(np.int8), ORDER_FERTILE,
                np.empty(0), -1.0, 1)
            diff_viol[i] = n_dv
            xi_T = Configuration(R, fin[1])
        if audit_restriction and big != R:
            restr_viol[i] = restriction_audit(xi_big, xi_R, R, tl_big)
        if "G" in want:
            flags["G"][i] = _good_after_block(xi_T, geom, settings, int(s), level=1, m=0)
            # on E the dominated contact process being good must force G
            if flags["E"][i] and not flags["G"][i] and \
                    _good_after_block(zeta_T, geom, settings, int(s), level=1, m=0):
                g_viol[i] = 1
    names = [e for e in ("E1", "E2", "E3", "E4") if e in want]
    if all_four:
        names.append("E")
    if "G" in want:
        names.append("G")
    report_events = {e: Estimate.of(flags[e]) for e in names}
    audits = {
        "restriction_violations": int(restr_viol.sum()) if audit_restriction else None,
        "fertile_domination_violations_on_E":
            int(diff_viol[flags["E"]].sum()) if all_four else None,
        "E_seeds": int(flags["E"].sum()) if all_four else None,
        "G_implication_violations": int(g_viol.sum()) if all_four and "G" in want else None,
    }
    closed = {"E1": e1_closed_forms(geom, lam, p), "E2": e2_closed_forms(geom, xi_on_R)}
    return BlockEventReport(report_events, closed, seeds, membership.center, audits,
                            {**flags, "restriction_violations": restr_viol,
                             "fertile_domination_violations": diff_viol,
                             "G_implication_violations": g_viol})


def _crop(c: Configuration, box: Box) -> Configuration:
    idx = c.box.indices_of(box.coords)
    if np.any(idx < 0):
        raise ContainmentError(f"{box} is not inside {c.box}")
    return Configuration(box, c.states[idx])


def _good_after_block(xi_T: Configuration, geom: BlockGeometry, settings: HSettings, seed: int,
                      level: int, m: int) -> bool:
    """xi_T recentred at both diagonal successors (m - 1, m + 1) of block m is in H."""
    for mm in (m - 1, m + 1):
        h = h_membership(xi_T, geom, settings, seed, center=e1_shift(mm, geom.d, geom.N),
                         tag=(level, mm))
        if not h.member:
            return False
    return True


def good_event(xi: Configuration, geom: BlockGeometry, lam: float, p: float, trials: int,
               seed0: int, settings: HSettings | None = None) -> tuple[float, float, np.ndarray]:
    """Frequency of G: Spont restricted to R from xi, judged at time T around -2N and +2N."""
    settings = settings or HSettings(lam, p, gamma=0.5)
    if not h_membership(xi, geom, settings, seed0).member:
        raise ValueError("configuration is not in H")
    R = geom.R_box()
    xi_R = _crop(xi.embed(R) if not xi.box.contains_box(R) else xi, R)
    flags = np.zeros(trials, dtype=bool)
    for i in range(trials):
        s = int(seed0) + i
        tl = generate_timeline(R, BoundaryRule.ABSORBING, lam, p, geom.T, s)
        xi_T = dyn.evolve(xi_R, ProcessKind.Spont, tl).final
        flags[i] = _good_after_block(xi_T, geom, settings, s, level=1, m=0)
    k = int(flags.sum())
    return k / trials, binomial_stderr(k, trials), flags


# ---------------------------------------------------------------------------
# wet sites and the comparison coupling

@dataclass(frozen=True, eq=False)
class WetReport:
    seed: int
    n_max: int
    good: dict            # (m, n) -> bool for every evaluated block
    wet: dict             # (m, n) -> bool on the cone |m| <= n <= n_max
    snapshots: tuple[Configuration, ...] = field(repr=False, default=())

    def X(self, n: int) -> set[int]:
        return {m for (m, nn), w in self.wet.items() if nn == n and w}

    def good_set(self, n: int) -> set[int]:
        return {m for (m, nn), g in self.good.items() if nn == n and g}


def wet_sites(xi: Configuration, geom: BlockGeometry, lam: float, p: float, n_max: int, seed: int,
              settings: HSettings | None = None) -> WetReport:
    """One Spont trajectory from xi on a box covering every block of the cone, with each
    wetness implication evaluated at times nT."""
    if geom.d != 1:
        raise GeometryError("wet sites are computed for d = 1")
    settings = settings or HSettings(lam, p, gamma=0.5)
    N = geom.N
    half = 2 * N * (n_max + 1) + 8 * N
    box = Box((-half,), (half,))
    if not xi.box.contains_box(geom.I_box()):
        raise ContainmentError("configuration does not cover I")
    x0 = xi.embed(box) if xi.box != box else xi
    h0 = h_membership(x0, geom, settings, seed, tag=(0, 0))
    if not h0.member:
        raise ValueError(f"initial configuration is not in H ({h0.verdict})")
    T = geom.T
    tl = generate_timeline(box, BoundaryRule.ABSORBING, lam, p, (n_max + 1) * T, seed)
    traj = dyn.evolve(x0, ProcessKind.Spont, tl, [n * T for n in range(n_max + 2)])
    snaps = traj.snapshots
    good = {(0, 0): True}

    def is_good(m: int, n: int) -> bool:
        if (m, n) not in good:
            good[(m, n)] = h_membership(snaps[n], geom, settings, seed,
                                        center=e1_shift(m, 1, N), tag=(n, m)).member
        return good[(m, n)]

    wet = {}
    for n in range(n_max + 1):
        for m in range(-n, n + 1, 2):
            wet[(m, n)] = (not is_good(m, n)) or (is_good(m - 1, n + 1) and is_good(m + 1, n + 1))
    return WetReport(seed, n_max, good, wet, snaps)


@dataclass(frozen=True)
class ComparisonAudit:
    seed: int
    levels: tuple[frozenset, ...]
    wet_violations: int       # m in A_n but not wet
    good_violations: int      # m in A_n but block (m, n) not good


def comparison_audit(report: WetReport, p_site: float, seed: int) -> ComparisonAudit:
    """Percolation field open = wet and (U < p_site), grown from the origin; checks
    A_n within X_n and within the good blocks at every level."""
    n_max = report.n_max
    lat = EvenLattice(n_max, n_max)
    u = site_uniforms(lat, seed)
    arr = np.zeros(lat.shape, dtype=bool)
    for (m, n), w in report.wet.items():
        arr[n, m + n_max] = w and u[n, m + n_max] < p_site
    f = PercolationField(lat, arr, {"kind": "wet_thinned", "p_site": p_site})
    cl = cluster_from_origin(f)
    wv = gv = 0
    for n, A in enumerate(cl.levels):
        X = report.X(n)
        G = report.good_set(n)
        wv += len(set(A) - X)
        gv += len(set(A) - G)
    return ComparisonAudit(report.seed, cl.levels, wv, gv)


# ---------------------------------------------------------------------------
# speed calibration and duality

@dataclass(frozen=True)
class Calibration:
    alpha1: float
    alpha2: float
    trials: int
    surviving: int
    failed: bool


def calibrate_speeds(lam_p: float, d: int, box: Box, T: float, trials: int, seed0: int,
                     eps: float = 0.01, quantile: float = 0.999) -> Calibration:
    """Empirical spread speed (``quantile`` of max sup-reach / T of the contact process from
    the origin) and coupling speed (``eps``-quantile over surviving runs of the smallest
    sup-distance / T at which the process from the origin and the process from all ones
    disagree at T)."""
    if box.d != d:
        raise GeometryError("box dimension does not match d")
    origin = dyn.default_initial(box)
    full = Configuration.full(box, 1)
    sup = np.max(np.abs(box.coords), axis=1)
    reach = np.zeros(trials)
    couple = []
    for i in range(trials):
        tl = generate_timeline(box, BoundaryRule.ABSORBING, lam_p, 1.0, T, int(seed0) + i)
        snaps, final, _, _, _, ever = replay_chain(
            tl.times, tl.kinds, tl.entities, tl.layout.edge_src, tl.layout.edge_dst,
            np.array([CONTACT, CONTACT], dtype=np.int64), np.stack([BASE_ROLES, BASE_ROLES]),
            np.stack([origin.states, full.states]).astype(np.int8), ORDER_NEG_FIRST,
            np.empty(0), T, 1)
        reach[i] = sup[ever[0]].max() / T
        if np.any(final[0] == 1):
            diff = final[0] != final[1]
            couple.append(sup[diff].min() / T if diff.any() else np.inf)
    alpha1 = float(np.quantile(reach, quantile))
    if not couple:
        return Calibration(alpha1, float("nan"), trials, 0, True)
    alpha2 = float(np.quantile(np.asarray(couple), eps))
    return Calibration(alpha1, alpha2, trials, len(couple), False)


@dataclass(frozen=True)
class DualityResult:
    lhs: float
    rhs: float
    lhs_stderr: float
    rhs_stderr: float
    z: float


def duality_check(zeta: Configuration, lam: float, t: float, box: Box, trials: int, seed0: int,
                  rule=BoundaryRule.ABSORBING) -> DualityResult:
    """Survival at t from zeta against the full-box process meeting A(zeta) at t."""
    if np.any(zeta.states == -1):
        raise ValueError("duality is stated for {0, 1} configurations")
    if zeta.box != box:
        zeta = zeta.embed(box)
    if t == 0:
        v = float(zeta.fertile_count > 0)
        return DualityResult(v, v, 0.0, 0.0, 0.0)
    seeds_l = np.arange(int(seed0), int(seed0) + trials, dtype=np.int64)
    alive, _ = run_survival(ProcessKind.Contact, lam, 1.0, box, rule, t, seeds_l, zeta,
                            early_stop=True)
    s0 = derive_seed(seed0, "duality-rhs") & _SEED_MASK
    finals = dyn.final_configurations(ProcessKind.Contact, lam, 1.0, box, rule, t,
                                      np.arange(s0, s0 + trials, dtype=np.int64),
                                      Configuration.full(box, 1))
    meets = np.any((finals == 1) & (zeta.states == 1)[None, :], axis=1)
    k1, k2 = int(alive.sum()), int(meets.sum())
    q1, q2 = k1 / trials, k2 / trials
    pooled = (k1 + k2) / (2 * trials)
    se = math.sqrt(2 * pooled * (1 - pooled) / trials)
    z = 0.0 if se == 0 else (q1 - q2) / se
    return DualityResult(q1, q2, binomial_stderr(k1, trials), binomial_stderr(k2, trials), z)
