"""Rate-inequality test for monotone couplings of {-1, 0, 1}-valued spin systems.

A process is described by its single-site flips: a target in state ``s`` moves to ``s2``
either because one neighbour is in state ``c`` (pairwise rate) or spontaneously.  Flips
are re-encoded as rank increments of a chosen order, collected into birth/death tables,
and two tables are compared through the pair of inequalities

    sum_{k > j + rank(delta) - rank(beta)} lower_birth(alpha, beta, k)
        <= sum_{k > j} upper_birth(gamma, delta, k)
    sum_{k > h + rank(gamma) - rank(alpha)} upper_death(gamma, delta, k)
        <= sum_{k > h} lower_death(alpha, beta, k)

for all ``h, j`` in {0, 1, 2} and comparable ``alpha <= gamma``, ``beta <= delta``.

Rates are linear forms with nonnegative coefficients over independent nonnegative atoms,
so an inequality holds for every parameter value exactly when it holds coefficient-wise.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping

from .dynamics import ORDER_NEG_FIRST, ORDER_PARTIAL, ORDER_ZERO_FIRST, ProcessKind, state_leq
from .coupling import parse_order

STATES = (-1, 0, 1)
ONE = "1"


class TableError(ValueError):
    pass


class LinExpr:
    """Nonnegative linear combination of named atoms; ``"1"`` is the constant atom."""

    __slots__ = ("terms",)

    def __init__(self, terms: Mapping[str, Fraction | float | int] | None = None):
        clean = {}
        for atom, c in (terms or {}).items():
            if c != 0:
                clean[atom] = c
        self.terms = clean

    @classmethod
    def const(cls, c) -> "LinExpr":
        return cls({ONE: c})

    @classmethod
    def atom(cls, name: str, c=1) -> "LinExpr":
        return cls({name: c})

    def __add__(self, other: "LinExpr") -> "LinExpr":
        out = dict(self.terms)
        for a, c in other.terms.items():
            out[a] = out.get(a, 0) + c
        return LinExpr(out)

    def __mul__(self, c) -> "LinExpr":
        return LinExpr({a: v * c for a, v in self.terms.items()})

    __rmul__ = __mul__

    def __eq__(self, other) -> bool:
        if isinstance(other, (int, float, Fraction)):
            other = LinExpr.const(other)
        return isinstance(other, LinExpr) and self.terms == other.terms

    def __hash__(self):
        return hash(frozenset(self.terms.items()))

    def is_zero(self) -> bool:
        return not self.terms

    def leq(self, other: "LinExpr", tol: float = 1e-12) -> bool:
        """Coefficient-wise comparison, i.e. validity for all nonnegative atom values."""
        return all(other.terms.get(a, 0) - c >= -tol for a, c in self.terms.items())

    def evaluate(self, values: Mapping[str, float]) -> float:
        return float(sum(c * (1.0 if a == ONE else values[a]) for a, c in self.terms.items()))

    def __repr__(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for a in sorted(self.terms, key=lambda s: (s == ONE, s)):
            c = self.terms[a]
            if a == ONE:
                parts.append(_fmt(c))
            elif c == 1:
                parts.append(a)
            else:
                parts.append(f"{_fmt(c)}*{a}")
        return " + ".join(parts)

    def to_json(self):
        return {a: (str(c) if isinstance(c, Fraction) else c) for a, c in sorted(self.terms.items())}


def _fmt(c) -> str:
    if isinstance(c, Fraction) and c.denominator == 1:
        return str(c.numerator)
    return str(c)


@dataclass(frozen=True)
class Params:
    """Fertile and sterile birth intensities (``lam p`` and ``lam (1 - p)``) of one process."""

    fertile: LinExpr
    sterile: LinExpr
    d: int = 1

    @classmethod
    def numeric(cls, lam: float, p: float, d: int = 1) -> "Params":
        if lam < 0 or not 0 <= p <= 1:
            raise TableError(f"invalid parameters lam={lam} p={p}")
        return cls(LinExpr.const(lam * p), LinExpr.const(lam * (1 - p)), d)

    @classmethod
    def symbolic(cls, d: int = 1) -> "Params":
        return cls(LinExpr.atom("lam*p"), LinExpr.atom("lam*(1-p)"), d)


def symbolic_p_pair(d: int = 1) -> tuple[Params, Params]:
    """Parameters of (lam, p1) and (lam, p2) with p1 <= p2, split into free atoms."""
    a, b, c = LinExpr.atom("lam*p1"), LinExpr.atom("lam*(p2-p1)"), LinExpr.atom("lam*(1-p2)")
    return Params(a, b + c, d), Params(a + b, c, d)


def symbolic_lambda_pair(d: int = 1) -> tuple[Params, Params]:
    """Parameters of (lam1, p) and (lam2, p) with lam1 <= lam2."""
    f1, f2 = LinExpr.atom("lam1*p"), LinExpr.atom("(lam2-lam1)*p")
    s1, s2 = LinExpr.atom("lam1*(1-p)"), LinExpr.atom("(lam2-lam1)*(1-p)")
    return Params(f1, s1, d), Params(f1 + f2, s1 + s2, d)


@dataclass(frozen=True)
class Flip:
    src: int
    dst: int
    cause: int | None   # neighbour state for pairwise flips, None for spontaneous ones
    rate: LinExpr


def process_flips(kind: ProcessKind | str, params: Params) -> list[Flip]:
    kind = ProcessKind.parse(kind)
    one = LinExpr.const(1)
    flips = [Flip(0, 1, 1, params.fertile), Flip(1, 0, None, one)]
    if kind is ProcessKind.IS:
        flips += [Flip(0, -1, 1, params.sterile), Flip(-1, 0, None, one)]
    elif kind is ProcessKind.Spont:
        flips += [Flip(0, -1, None, params.sterile * (2 * params.d)), Flip(-1, 0, None, one)]
    return flips


def ranks(order: int) -> dict[int, int]:
    if order == ORDER_ZERO_FIRST:
        return {0: 0, -1: 1, 1: 2}
    # the partial order is ranked through its linear extension -1 < 0 < 1
    return {-1: 0, 0: 1, 1: 2}


@dataclass
class RateTable:
    """Birth/death tables indexed by states (stored by rank internally).

    ``birth[(a, b, k)]``: target in state b moves up k ranks because a neighbour is in a;
    ``birth_spont[(b, k)]``; ``death[(a, b, k)]``: target in state a moves down k ranks
    because a neighbour is in b; ``death_spont[(a, k)]``.
    """

    order: int
    birth: dict = field(default_factory=dict)
    birth_spont: dict = field(default_factory=dict)
    death: dict = field(default_factory=dict)
    death_spont: dict = field(default_factory=dict)

    @classmethod
    def from_flips(cls, flips: Iterable[Flip], order) -> "RateTable":
        order = parse_order(order)
        rk = ranks(order)
        t = cls(order)
        for f in flips:
            if f.src not in STATES or f.dst not in STATES or f.src == f.dst:
                raise TableError(f"flip {f.src} -> {f.dst} leaves {{-1, 0, 1}}")
            if f.cause is not None and f.cause not in STATES:
                raise TableError(f"neighbour state {f.cause} not in {{-1, 0, 1}}")
            k = rk[f.dst] - rk[f.src]
            if k > 0:
                if f.cause is None:
                    _acc(t.birth_spont, (f.src, k), f.rate)
                else:
                    _acc(t.birth, (f.cause, f.src, k), f.rate)
            else:
                if f.cause is None:
                    _acc(t.death_spont, (f.src, -k), f.rate)
                else:
                    _acc(t.death, (f.src, f.cause, -k), f.rate)
        return t

    def entries(self) -> dict[str, LinExpr]:
        """Non-zero entries keyed in the ``R^{0,k}_{a,b}`` / ``P^{k}_{b}`` style."""
        out = {}
        for (a, b, k), v in self.birth.items():
            out[f"R[{a},{b}]^(0,{k})"] = v
        for (b, k), v in self.birth_spont.items():
            out[f"P[{b}]^({k})"] = v
        for (a, b, k), v in self.death.items():
            out[f"R[{a},{b}]^(-{k},0)"] = v
        for (a, k), v in self.death_spont.items():
            out[f"P[{a}]^(-{k})"] = v
        return {k: v for k, v in out.items() if not v.is_zero()}


def _acc(d: dict, key, v: LinExpr) -> None:
    d[key] = d.get(key, LinExpr()) + v


def builtin_tables(kind: ProcessKind | str, lam=None, p=None, order="neg-first", d: int = 1,
                   params: Params | None = None) -> RateTable:
    """Rate table of Contact, IS or Spont; symbolic unless ``lam`` and ``p`` are given."""
    if params is None:
        params = Params.symbolic(d) if lam is None else Params.numeric(lam, 1.0 if p is None else p, d)
    return RateTable.from_flips(process_flips(kind, params), order)


def pi_sums(table: RateTable, alpha: int, beta: int, side: str, threshold: int) -> LinExpr:
    """Sum over k > threshold (k <= 2) of the birth (resp. death) rate plus its spontaneous part."""
    total = LinExpr()
    for k in range(max(threshold + 1, 1), 3):
        if side == "birth":
            total = total + table.birth.get((alpha, beta, k), LinExpr()) + table.birth_spont.get((beta, k), LinExpr())
        elif side == "death":
            total = total + table.death.get((alpha, beta, k), LinExpr()) + table.death_spont.get((alpha, k), LinExpr())
        else:
            raise ValueError("side must be 'birth' or 'death'")
    return total


@dataclass(frozen=True)
class Failure:
    inequality: str
    alpha: int
    beta: int
    gamma: int
    delta: int
    threshold: int
    lhs: LinExpr
    rhs: LinExpr

    def to_json(self) -> dict:
        return {"inequality": self.inequality, "alpha": self.alpha, "beta": self.beta,
                "gamma": self.gamma, "delta": self.delta, "threshold": self.threshold,
                "lhs": repr(self.lhs), "rhs": repr(self.rhs)}


@dataclass(frozen=True)
class MonotonicityVerdict:
    passed: bool
    failures: tuple[Failure, ...]
    checked: int

    @property
    def first(self) -> Failure | None:
        return self.failures[0] if self.failures else None

    def to_json(self) -> dict:
        return {"pass": self.passed, "checked": self.checked,
                "failures": [f.to_json() for f in self.failures]}


def comparable_pairs(order: int) -> list[tuple[int, int]]:
    return [(a, b) for a in STATES for b in STATES if state_leq(order, a, b)]


def check_monotone(lower: RateTable, upper: RateTable, order=None) -> MonotonicityVerdict:
    """Evaluate both inequalities over every admissible tuple; ``upper`` dominates ``lower``
    iff no failure is reported."""
    order = lower.order if order is None else parse_order(order)
    if lower.order != order or upper.order != order:
        raise TableError("tables were encoded for a different order")
    rk = ranks(order)
    pairs = comparable_pairs(order)
    failures = []
    checked = 0
    for (alpha, gamma), (beta, delta) in itertools.product(pairs, pairs):
        for j in range(3):
            lhs = pi_sums(lower, alpha, beta, "birth", j + rk[delta] - rk[beta])
            rhs = pi_sums(upper, gamma, delta, "birth", j)
            checked += 1
            if not lhs.leq(rhs):
                failures.append(Failure("I1", alpha, beta, gamma, delta, j, lhs, rhs))
        for h in range(3):
            lhs = pi_sums(upper, gamma, delta, "death", h + rk[gamma] - rk[alpha])
            rhs = pi_sums(lower, alpha, beta, "death", h)
            checked += 1
            if not lhs.leq(rhs):
                failures.append(Failure("I2", alpha, beta, gamma, delta, h, lhs, rhs))
    return MonotonicityVerdict(not failures, tuple(failures), checked)


def table_from_json(obj: dict, order) -> RateTable:
    """``{"flips": [{"from": 0, "to": 1, "cause": 1, "rate": 2.0}, ...]}``; ``cause`` null
    or absent for spontaneous flips."""
    try:
        flips = [Flip(int(f["from"]), int(f["to"]),
                      None if f.get("cause") is None else int(f["cause"]),
                      LinExpr.const(float(f["rate"]))) for f in obj["flips"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise TableError(f"malformed rate table: {exc}") from None
    if any(f.rate.terms.get(ONE, 0) < 0 for f in flips):
        raise TableError("rates must be nonnegative")
    return RateTable.from_flips(flips, order)


def load_tables(path: str, order) -> tuple[RateTable, RateTable]:
    """A file holds either one table (compared with itself) or ``{"lower": .., "upper": ..}``."""
    with open(path) as fh:
        obj = json.load(fh)
    if "lower" in obj:
        return table_from_json(obj["lower"], order), table_from_json(obj["upper"], order)
    t = table_from_json(obj, order)
    return t, t
