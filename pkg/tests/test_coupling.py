import numpy as np
import pytest

from islab.coupling import (CouplingError, config_leq, couple_is_contact, couple_spont_is,
                            couple_spont_spont, find_order_violation_is, one_step_audit,
                            rates_spont_is, survey_coupling)
from islab.dynamics import ORDER_NEG_FIRST, ORDER_PARTIAL, ORDER_ZERO_FIRST, default_initial
from islab.events import generate_split_timeline, generate_timeline
from islab.lattice import Box, BoundaryRule, Configuration

ABS = BoundaryRule.ABSORBING
BOX = Box.centered(50)


def _audit_ok(report):
    for outcome, (count, q, se) in report.items():
        n = sum(c for c, _, _ in report.values())
        assert abs(count / n - q) <= 3 * se + 1e-12, (outcome, count / n, q)


def test_is_below_contact_over_many_seeds():
    sv = survey_coupling("is-contact", 2.0, 0.7, BOX, ABS, 20.0, np.arange(10_000))
    assert sv.total_violations == 0
    assert np.all(sv.extinct_upper <= sv.extinct_lower)


def test_is_from_empty_stays_empty():
    tl = generate_timeline(BOX, ABS, 2.0, 0.7, 5.0, 3)
    pair = couple_is_contact(Configuration.empty(BOX), default_initial(BOX), 2.0, 0.7, tl, [1.0, 5.0])
    assert pair.ordered
    assert all(s.fertile_count == 0 and s.sterile_count == 0 for s in pair.lower.snapshots)


def test_is_contact_one_step_rates():
    # x = 0 with n1(eta) = 1 and n1(zeta) = 2
    box = Box.centered(1)
    lower = Configuration(box, [1, 0, 0])
    upper = Configuration(box, [1, 0, 1])
    rep = one_step_audit("is-contact", lower, upper, (0,), 2.0, 0.7, 100_000, 0)
    assert set(k for k in rep if k is not None) == {(1, 1), (0, 1), (-1, 0)}
    _audit_ok(rep)


def test_spont_below_is_over_many_seeds():
    sv = survey_coupling("spont-is", 3.0, 0.9, BOX, ABS, 20.0, np.arange(10_000))
    assert sv.total_violations == 0


def test_spont_and_is_coincide_at_p_one():
    init = Configuration.full(BOX, 1, within=Box.centered(3))
    for seed in range(20):
        tl = generate_timeline(BOX, ABS, 3.0, 1.0, 5.0, seed)
        pair = couple_spont_is(init, init, 3.0, 1.0, tl, [1.0, 2.0, 5.0])
        assert all(a == b for a, b in zip(pair.lower.snapshots, pair.upper.snapshots))


def test_spont_is_blocking_rate_at_interior_site():
    box = Box.centered(1)
    lower = Configuration(box, [1, 0, 0])
    upper = Configuration(box, [1, 0, 0])
    lam, p = 2.0, 0.6
    rates = rates_spont_is(0, 0, 1, 1, lam, p, 2)
    assert rates[(-1, 0)] == pytest.approx(lam * (1 - p) * (2 - 1))
    rep = one_step_audit("spont-is", lower, upper, (0,), lam, p, 100_000, 1)
    _audit_ok(rep)


def test_spont_spont_one_step_rates():
    box = Box.centered(1)
    lower = Configuration(box, [1, 0, 0])
    upper = Configuration(box, [1, 0, 1])
    rep = one_step_audit("spont-spont", lower, upper, (0,), 2.0, 0.3, 100_000, 2, p2=0.8)
    _audit_ok(rep)


def test_spont_spont_equal_p_coincide():
    init = Configuration.full(BOX, 1, within=Box.centered(2))
    for seed in range(20):
        sp = generate_split_timeline(BOX, ABS, 3.0, 0.7, 0.7, 5.0, seed)
        pair = couple_spont_spont(init, init, 3.0, 0.7, 0.7, sp, [2.0, 5.0])
        assert pair.lower.final == pair.upper.final


def test_spont_spont_monotone_over_many_seeds():
    sv = survey_coupling("spont-spont", 3.0, 0.6, BOX, ABS, 20.0, np.arange(10_000), p2=0.9)
    assert sv.total_violations == 0
    lo, up = 1 - sv.extinct_lower.mean(), 1 - sv.extinct_upper.mean()
    se = np.hypot(np.sqrt(lo * (1 - lo) / 10_000), np.sqrt(up * (1 - up) / 10_000))
    assert lo <= up + 3 * se


def test_counts_follow_sitewise_order():
    init = default_initial(BOX)
    for seed in range(30):
        tl = generate_timeline(BOX, ABS, 3.0, 0.8, 10.0, seed)
        pair = couple_spont_is(init, init, 3.0, 0.8, tl, [1.0, 4.0, 10.0])
        for a, b in zip(pair.lower.snapshots, pair.upper.snapshots):
            assert config_leq(a, b) and a.fertile_count <= b.fertile_count


def test_unordered_initials_rejected():
    tl = generate_timeline(BOX, ABS, 2.0, 0.5, 1.0, 0)
    with pytest.raises(CouplingError):
        couple_is_contact(default_initial(BOX), Configuration.empty(BOX), 2.0, 0.5, tl)
    with pytest.raises(Exception):
        couple_spont_spont(Configuration.empty(BOX), Configuration.empty(BOX), 2.0, 0.9, 0.5,
                           generate_split_timeline(BOX, ABS, 2.0, 0.5, 0.9, 1.0, 0))


def test_lower_marks_are_a_subset_of_the_split_timeline():
    sp = generate_split_timeline(BOX, ABS, 2.0, 0.3, 0.8, 2.0, 5)
    for which in ("lower", "upper"):
        assert np.isin(sp.stream_set(which).times, sp.timeline.times).all()


def test_neg_first_witness_is_a_sterile_birth():
    w = find_order_violation_is(ORDER_NEG_FIRST, 2.0, 0.5)
    assert w is not None
    assert w.mark[0] == "BirthSterile" and w.site == (1,) and w.states == (0, -1)


def test_zero_first_witness_is_a_fertile_birth():
    w = find_order_violation_is(ORDER_ZERO_FIRST, 2.0, 0.5)
    assert w is not None
    assert w.mark[0] == "BirthFertile" and w.site == (1,) and w.states == (1, -1)


def test_partial_order_witness():
    assert find_order_violation_is(ORDER_PARTIAL, 2.0, 0.5) is not None


def test_no_witness_when_sterile_marks_are_silent():
    assert find_order_violation_is(ORDER_NEG_FIRST, 2.0, 1.0, search_budget=300) is None
