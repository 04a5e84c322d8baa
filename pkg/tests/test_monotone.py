import json
import time
from fractions import Fraction

import pytest

from islab.monotone import (LinExpr, Params, RateTable, TableError, builtin_tables,
                            check_monotone, load_tables, pi_sums, process_flips, ranks,
                            symbolic_lambda_pair, symbolic_p_pair)
from islab.dynamics import ORDER_NEG_FIRST, ORDER_ZERO_FIRST

lam_p, lam_q = LinExpr.atom("lam*p"), LinExpr.atom("lam*(1-p)")
ONE, ZERO = LinExpr.const(1), LinExpr()


def failures_at(verdict, ineq, ab, gd, thr):
    return [f for f in verdict.failures if f.inequality == ineq and (f.alpha, f.beta) == ab
            and (f.gamma, f.delta) == gd and f.threshold == thr]


def test_is_entries_under_neg_first():
    assert builtin_tables("is", order="neg-first").entries() == {
        "R[1,0]^(0,1)": lam_p, "R[0,1]^(-1,0)": lam_q, "P[1]^(-1)": ONE, "P[-1]^(1)": ONE}


def test_is_entries_under_zero_first():
    assert builtin_tables("is", order="zero-first").entries() == {
        "R[1,0]^(0,2)": lam_p, "R[1,0]^(0,1)": lam_q, "P[1]^(-2)": ONE, "P[-1]^(-1)": ONE}


def test_contact_entries():
    assert builtin_tables("contact").entries() == {"R[1,0]^(0,1)": lam_p, "P[1]^(-1)": ONE}


def test_pi_sums_examples():
    empty = RateTable(ORDER_NEG_FIRST)
    for a in (-1, 0, 1):
        for b in (-1, 0, 1):
            assert pi_sums(empty, a, b, "birth", 0) == ZERO
    is_t = builtin_tables("is")
    # only the fertile birth moves the target up from 0 under -1 < 0 < 1
    assert pi_sums(is_t, 1, 0, "birth", 0) == lam_p
    sp = builtin_tables("spont")
    for b in (-1, 0, 1):
        assert pi_sums(sp, 1, b, "death", 0) == ONE


def test_is_neg_first_counterexample():
    t = builtin_tables("is", order="neg-first")
    v = check_monotone(t, t, "neg-first")
    assert not v.passed
    (f,) = failures_at(v, "I2", (0, 0), (0, 1), 0)
    assert f.lhs == lam_q and f.rhs == ZERO


def test_is_zero_first_counterexample():
    t = builtin_tables("is", order="zero-first")
    v = check_monotone(t, t, "zero-first")
    assert not v.passed
    (f,) = failures_at(v, "I1", (1, 0), (1, -1), 0)
    assert f.lhs == lam_p and f.rhs == ZERO
    assert len(v.failures) == 1


def test_is_partial_order_fails():
    t = builtin_tables("is", order="partial")
    assert not check_monotone(t, t, "partial").passed


def test_spont_monotone_in_p_symbolically():
    lo, up = symbolic_p_pair()
    v = check_monotone(builtin_tables("spont", params=lo), builtin_tables("spont", params=up))
    assert v.passed and v.checked == 216


def test_spont_monotone_in_p_numerically():
    lo = builtin_tables("spont", 1.0, 0.3)
    up = builtin_tables("spont", 1.0, 0.7)
    assert check_monotone(lo, up).passed
    # and the reverse direction fails
    assert not check_monotone(up, lo).passed


@pytest.mark.parametrize("lam", [0.1, 1.0, 4.0, 50.0])
def test_contact_is_attractive(lam):
    t = builtin_tables("contact", lam, 1.0)
    assert check_monotone(t, t).passed


def test_no_lambda_monotonicity_witnesses():
    lo, up = symbolic_lambda_pair()
    v_is = check_monotone(builtin_tables("is", params=lo), builtin_tables("is", params=up))
    v_sp = check_monotone(builtin_tables("spont", params=lo), builtin_tables("spont", params=up))
    assert failures_at(v_is, "I2", (0, -1), (0, 1), 0)
    assert failures_at(v_sp, "I2", (0, -1), (0, -1), 0)


def _direct_sum(kind, params, order, a, b, side, thr):
    # recomputed from the flip list, without the table or pi_sums
    rk = ranks(order)
    total = LinExpr()
    for f in process_flips(kind, params):
        k = rk[f.dst] - rk[f.src]
        if side == "birth" and k > max(thr, 0) and f.src == b and f.cause in (a, None):
            total = total + f.rate
        if side == "death" and -k > max(thr, 0) and f.src == a and f.cause in (b, None):
            total = total + f.rate
    return total


def test_failures_recomputed_independently():
    sym = Params.symbolic()
    for kind, order in [("is", ORDER_NEG_FIRST), ("is", ORDER_ZERO_FIRST)]:
        t = builtin_tables(kind, params=sym, order=order)
        rk = ranks(order)
        for f in check_monotone(t, t, order).failures:
            if f.inequality == "I1":
                lhs = _direct_sum(kind, sym, order, f.alpha, f.beta, "birth",
                                  f.threshold + rk[f.delta] - rk[f.beta])
                rhs = _direct_sum(kind, sym, order, f.gamma, f.delta, "birth", f.threshold)
            else:
                lhs = _direct_sum(kind, sym, order, f.gamma, f.delta, "death",
                                  f.threshold + rk[f.gamma] - rk[f.alpha])
                rhs = _direct_sum(kind, sym, order, f.alpha, f.beta, "death", f.threshold)
            assert lhs == f.lhs and rhs == f.rhs and not lhs.leq(rhs)


def test_linexpr_arithmetic():
    e = LinExpr.atom("a") * 2 + LinExpr.const(Fraction(1, 2))
    assert repr(e) in ("2*a + 1/2", "1/2 + 2*a")
    assert e.evaluate({"a": 1.0}) == 2.5
    assert LinExpr.atom("a").leq(e) and not e.leq(LinExpr.atom("a"))


def test_table_json_roundtrip(tmp_path):
    table = {"flips": [{"from": 0, "to": 1, "cause": 1, "rate": 2.0},
                       {"from": 1, "to": 0, "rate": 1.0}]}
    path = tmp_path / "contact.json"
    path.write_text(json.dumps(table))
    lo, up = load_tables(str(path), "neg-first")
    assert check_monotone(lo, up).passed
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"flips": [{"from": 0, "to": 2, "rate": 1.0}]}))
    with pytest.raises(TableError):
        load_tables(str(bad), "neg-first")


def test_all_checks_are_fast():
    t0 = time.perf_counter()
    for order in ("neg-first", "zero-first", "partial"):
        t = builtin_tables("is", order=order)
        check_monotone(t, t, order)
    assert time.perf_counter() - t0 < 1.0
