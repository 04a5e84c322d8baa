import math

import numpy as np
import pytest

from islab.ctmc import SmallChain
from islab.dynamics import (ProcessKind, active_path_endpoints, evolve, hit_before_extinction,
                            reachable_set, run_survival, step_semantics, survival_proxy)
from islab.events import StreamKind, generate_timeline, restrict
from islab.lattice import Box, BoundaryRule, Configuration

ABS = BoundaryRule.ABSORBING
C, I, S = ProcessKind.Contact, ProcessKind.IS, ProcessKind.Spont
BF, BS, DF, DS = (StreamKind(k) for k in range(4))


@pytest.mark.parametrize("kind,src,dst,mark,new", [
    (I, 0, 0, BF, 0),
    (S, 0, 0, BS, -1),
    (C, 1, 0, BS, 0),
    (I, 1, 0, BF, 1),
    (I, 1, 0, BS, -1),
    (I, 0, 0, BS, 0),
    (S, -1, 0, BS, -1),
    (S, 1, 1, BS, 1),
    (C, 1, 0, BF, 1),
    (I, 0, 1, DF, 0),
    (I, 0, -1, DS, 0),
    (I, 0, -1, DF, -1),
    (I, 0, 1, DS, 1),
])
def test_flip_rules(kind, src, dst, mark, new):
    assert step_semantics(kind, src, dst, mark) == new


@pytest.mark.parametrize("kind", [C, I, S])
def test_empty_initial_stays_empty(kind):
    box = Box.centered(10)
    tl = generate_timeline(box, ABS, 3.0, 0.5, 5.0, 1)
    tr = evolve(Configuration.empty(box), kind, tl, [1.0, 5.0])
    assert tr.extinction_time == 0.0
    assert all(s.fertile_count == 0 for s in tr.snapshots)


def test_is_at_p_one_is_the_contact_process():
    box = Box.centered(30)
    init = Configuration.full(box, 1, within=Box.centered(3))
    times = [0.5, 1.0, 2.5, 5.0]
    for seed in range(30):
        tl = generate_timeline(box, ABS, 2.5, 1.0, 5.0, seed)
        a, b = evolve(init, I, tl, times), evolve(init, C, tl, times)
        assert all(x == y for x, y in zip(a.snapshots, b.snapshots))


def test_snapshot_values_stay_in_state_space():
    box = Box((-6, -6), (6, 6))
    tl = generate_timeline(box, ABS, 2.0, 0.6, 3.0, 4)
    init = Configuration.full(box, 1, within=Box((-1, -1), (1, 1)))
    for kind in (I, S):
        for snap in evolve(init, kind, tl, [0.5, 1.5, 3.0]).snapshots:
            assert set(np.unique(snap.states)) <= {-1, 0, 1}
    for snap in evolve(init, C, tl, [0.5, 3.0]).snapshots:
        assert set(np.unique(snap.states)) <= {0, 1}


def test_replay_is_a_fold():
    # prefix then suffix equals the whole replay
    box = Box.centered(15)
    tl = generate_timeline(box, ABS, 3.0, 0.8, 4.0, 21)
    init = Configuration.full(box, 1, within=Box.centered(2))
    whole = evolve(init, S, tl).final
    k = len(tl) // 3
    first = evolve(init, S, tl.with_marks(np.arange(len(tl)) < k)).final
    second = evolve(first, S, tl.with_marks(np.arange(len(tl)) >= k)).final
    assert whole == second


def test_errors():
    box = Box.centered(3)
    tl = generate_timeline(box, ABS, 1.0, 0.5, 1.0, 0)
    with pytest.raises(ValueError):
        evolve(Configuration.empty(Box.centered(4)), C, tl)
    with pytest.raises(ValueError):
        evolve(Configuration.from_sites(box, sterile=[(0,)]), C, tl)


def test_reachable_set_at_time_zero_and_without_marks():
    box = Box.centered(5)
    init = Configuration.from_sites(box, fertile=[(0,), (2,)])
    tl = generate_timeline(box, ABS, 2.0, 1.0, 3.0, 3)
    assert reachable_set(init, C, tl, 0.0) == init.fertile_sites()
    empty = tl.with_marks(np.zeros(len(tl), dtype=bool))
    assert reachable_set(init, C, empty, 2.0) == init.fertile_sites()


def test_active_paths_match_replay():
    box = Box((0,), (4,))
    init = Configuration.from_sites(box, fertile=[(2,)])
    for seed in range(100):
        tl = generate_timeline(box, ABS, 2.0, 1.0, 3.0, seed)
        for t in (0.7, 1.5, 3.0):
            assert active_path_endpoints(init, tl, t) == reachable_set(init, C, tl, t)


def test_hitting_probability_matches_exact_chain():
    # 3 sites, single 1 in the middle; probability of ever occupying the left end
    box = Box((0,), (2,))
    init = Configuration.from_sites(box, fertile=[(1,)])
    exact = SmallChain(C, 1.0, 1.0, box).hit_before_extinction(init, {(0,)})
    n = 100_000
    hit, decided = hit_before_extinction(C, 1.0, 1.0, box, ABS, 200.0, np.arange(n), init, [(0,)])
    assert decided.all()
    q = hit.mean()
    assert abs(q - exact) < 3 * math.sqrt(exact * (1 - exact) / n)


def test_pure_death_never_survives():
    box = Box.centered(10)
    est, _ = survival_proxy(C, 0.0, 1.0, box, ABS, 20.0, 10_000, 0)
    assert est == 0.0
    est, _ = survival_proxy(I, 3.0, 0.0, box, ABS, 20.0, 10_000, 0)
    assert est == 0.0


def test_pure_death_survival_time_is_exponential():
    n = 20_000
    alive, _ = run_survival(C, 0.0, 1.0, Box.centered(2), ABS, 1.0, np.arange(n))
    q = math.exp(-1.0)
    assert abs(alive.mean() - q) < 3 * math.sqrt(q * (1 - q) / n)


def test_fused_survival_matches_replay():
    box = Box.centered(20)
    init = Configuration.full(box, 1, within=Box.centered(1))
    seeds = np.arange(40)
    for kind in (C, I, S):
        alive, ext = run_survival(kind, 2.5, 0.8, box, ABS, 6.0, seeds, init, early_stop=False)
        for s, a, e in zip(seeds, alive, ext):
            tr = evolve(init, kind, generate_timeline(box, ABS, 2.5, 0.8, 6.0, int(s)))
            assert a == (tr.final.fertile_count > 0)
            if tr.extinction_time is None:
                assert math.isinf(e)
            else:
                assert e == tr.extinction_time


def test_contact_survival_is_positive_and_stable_across_seed_blocks():
    box = Box.centered(200)
    n = 300
    a, sa = survival_proxy(C, 4.0, 1.0, box, ABS, 100.0, n, 0)
    b, sb = survival_proxy(C, 4.0, 1.0, box, ABS, 100.0, n, 10_000)
    assert a > 0 and b > 0
    assert abs(a - b) < 3 * math.hypot(sa, sb)


def test_restricted_spont_stays_below():
    big, R = Box.centered(25), Box.centered(12)
    xi = Configuration.full(big, 1, within=Box.centered(4))
    xi_R = Configuration.full(R, 1, within=Box.centered(4))
    times = list(np.linspace(0.25, 5.0, 20))
    for seed in range(50):
        tl = generate_timeline(big, ABS, 3.0, 0.85, 5.0, seed)
        up = evolve(xi, S, tl, times)
        lo = evolve(xi_R, S, restrict(tl, R, 0.0, 5.0), times)
        idx = big.indices_of(R.coords)
        for a, b in zip(lo.snapshots, up.snapshots):
            assert np.all(a.states <= b.states[idx])


def test_trajectory_summary():
    box = Box.centered(10)
    init = Configuration.from_sites(box, fertile=[(-2,), (3,)], sterile=[(0,)])
    tr = evolve(init, I, generate_timeline(box, ABS, 1.0, 0.5, 1e-9, 0), [0.0])
    assert tr.fertile_extent() == [((-2,), (3,))]
    assert tr.fertile_count == 2 and tr.sterile_count == 1
