import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from islab.lattice import (Box, BoundaryRule, Configuration, ContainmentError, enumerate_edges,
                           neighbor_table, neighbors, translate)

ABS, PER = BoundaryRule.ABSORBING, BoundaryRule.PERIODIC


def test_interior_neighbors_in_2d_are_the_l1_ball():
    box = Box((-3, -3), (3, 3))
    for rule in (ABS, PER):
        assert set(neighbors(box, (0, 0), rule)) == {(1, 0), (-1, 0), (0, 1), (0, -1)}


def test_boundary_neighbors_1d():
    box = Box((0,), (10,))
    assert set(neighbors(box, (0,), ABS)) == {(1,)}
    assert set(neighbors(box, (0,), PER)) == {(1,), (10,)}


def test_neighbors_outside_box_raises():
    with pytest.raises(ContainmentError):
        neighbors(Box((0,), (3,)), (4,))


@pytest.mark.parametrize("box,expected", [
    (Box((0,), (1,)), {((0,), (1,)), ((1,), (0,))}),
])
def test_two_site_edges(box, expected):
    assert set(enumerate_edges(box, ABS)) == expected


@pytest.mark.parametrize("box,count", [(Box((0,), (2,)), 4), (Box((0, 0), (1, 1)), 8)])
def test_edge_counts(box, count):
    edges = enumerate_edges(box, ABS)
    assert len(edges) == count == len(set(edges))


@pytest.mark.parametrize("rule", [ABS, PER])
@pytest.mark.parametrize("box", [Box((0,), (6,)), Box((0, 0), (3, 4)), Box((-1, 0, 2), (1, 2, 4))])
def test_degree_bounds_and_symmetry(box, rule):
    nbr = neighbor_table(box, rule)
    deg = (nbr >= 0).sum(axis=1)
    if rule is PER:
        assert np.all(deg == 2 * box.d)
    else:
        assert np.all((deg >= box.d) & (deg <= 2 * box.d))
    for x in range(box.volume):
        for y in nbr[x][nbr[x] >= 0]:
            assert x in nbr[y]


def test_box_validation():
    with pytest.raises(ValueError):
        Box((1,), (0,))
    with pytest.raises(OverflowError):
        Box((0, 0, 0), (10 ** 7, 10 ** 7, 10 ** 7))
    with pytest.raises(ValueError):
        neighbor_table(Box((0,), (1,)), PER)


def test_index_roundtrip():
    box = Box((-2, 1), (2, 4))
    for i, x in enumerate(box.sites()):
        assert box.index(x) == i and box.site(i) == x


def test_translate_identity_and_shift():
    box = Box.centered(10)
    c = Configuration.from_sites(box, fertile=[(0,)])
    assert translate(box, c, (0,)) == c
    assert translate(box, c, (3,)).fertile_sites() == {(3,)}


def test_translate_periodic_wraps():
    box = Box((0,), (4,))
    c = Configuration.from_sites(box, fertile=[(4,)], sterile=[(0,)])
    t = translate(box, c, (1,), PER)
    assert t.fertile_sites() == {(0,)} and t.sterile_sites() == {(1,)}


def test_translate_dimension_mismatch():
    box = Box.centered(3)
    with pytest.raises(ValueError):
        translate(box, Configuration.empty(box), (1, 1))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.sampled_from([-1, 0, 1]), min_size=10, max_size=10), st.integers(-4, 4))
def test_translate_inverse_on_interior_support(inner, v):
    # 20-site box, support kept at distance > |v| from the boundary
    box = Box((0,), (19,))
    states = np.zeros(20, dtype=np.int8)
    states[5:15] = inner
    c = Configuration(box, states)
    back = translate(box, translate(box, c, (v,)), (-v,))
    assert back == c
    assert sorted(translate(box, c, (v,)).states) == sorted(c.states)


def test_configuration_rejects_bad_states():
    with pytest.raises(ValueError):
        Configuration(Box.centered(1), [0, 2, 0])
    with pytest.raises(ValueError):
        Configuration(Box.centered(1), [0, 0])


def test_embed_roundtrip_and_containment():
    small, big = Box.centered(2), Box.centered(5)
    c = Configuration.from_sites(small, fertile=[(-2,), (1,)], sterile=[(0,)])
    e = c.embed(big)
    assert e.fertile_sites() == c.fertile_sites() and e.sterile_sites() == {(0,)}
    assert e.embed(small) == c
    with pytest.raises(ContainmentError):
        Configuration.from_sites(big, fertile=[(5,)]).embed(small)


def test_box_json_roundtrip():
    box = Box((-1, 0), (3, 2))
    b2, rule = Box.from_json(box.to_json(PER))
    assert b2 == box and rule is PER
    with pytest.raises(ValueError):
        Box.from_json({"d": 3, "lo": [0], "hi": [1]})
