import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cfpilot.errors import InvalidConfig
from cfpilot.topology import (Geometry, Topology, assign_serving_du, build_topology, form_cluster,
                              topology_from_positions)


def example_layout():
    """Three strips, three RUs each, three users (0-based indices)."""
    ru = np.array([[20, 10], [25, 40], [20, 120],
                   [45, 10], [45, 40], [50, 120],
                   [80, 10], [80, 60], [80, 120]], dtype=float)
    users = np.array([[33, 25], [22, 60], [80, 100]], dtype=float)
    return topology_from_positions(Geometry(), ru, users, U=3, cluster_size=4)


def test_example_sets():
    t = example_layout()
    assert t.M_du[0] == (0, 1, 2)
    assert t.M_ue[0] == (0, 1, 3, 4)
    assert t.K_ru[1] == (0, 1)
    assert t.K_du[0] == (0, 1)
    t.check()


def test_single_du_owns_everyone():
    rng = np.random.default_rng(1)
    t = build_topology(Geometry(), 12, 1, 7, 3, "uniform", rng)
    assert t.K_du[0] == tuple(range(7))
    assert np.all(t.serving_du == 0)


def test_balanced_equal_groups():
    t = build_topology(Geometry(), 96, 4, 24, 8, "balanced", np.random.default_rng(3))
    assert [len(g) for g in t.M_du] == [24, 24, 24, 24]


def test_uniform_strip_membership():
    t = build_topology(Geometry(), 40, 4, 5, 3, "uniform", np.random.default_rng(3))
    for u, group in enumerate(t.M_du):
        x0, _, x1, _ = t.du_region(u)
        xs = t.ru_pos[list(group), 0]
        assert np.all((xs >= x0) & (xs <= x1))


def test_clustered_points_inside_area():
    g = Geometry()
    t = build_topology(g, 30, 3, 20, 4, "clustered", np.random.default_rng(5))
    for pos in (t.ru_pos, t.user_pos):
        assert np.all(pos >= 0) and np.all(pos[:, 0] <= g.width) and np.all(pos[:, 1] <= g.height)


@pytest.mark.parametrize("kw,field", [
    (dict(M=4, K=3, cluster_size=5), "cluster_size"),
    (dict(M=0, K=3, cluster_size=1), "M"),
    (dict(M=4, K=0, cluster_size=1), "K"),
])
def test_invalid_sizes(kw, field):
    with pytest.raises(InvalidConfig) as e:
        build_topology(Geometry(), U=1, placement="uniform", rng=np.random.default_rng(0), **kw)
    assert e.value.field == field


def test_bad_geometry():
    with pytest.raises(InvalidConfig):
        Geometry(width=0)


def test_form_cluster_examples():
    line = np.array([[0, 0], [1, 0], [2, 0], [3, 0]], dtype=float)
    assert form_cluster([1.4, 0], line, 2) == (1, 2)
    assert form_cluster([2, 0], line, 1) == (2,)
    assert form_cluster([9, 9], line, 4) == (0, 1, 2, 3)
    # equidistant RUs: lower index wins
    assert form_cluster([1.5, 0], line, 1) == (1,)


def test_serving_du_rules():
    M_du = [(0, 1, 2), (3, 4, 5), (6, 7, 8)]
    assert assign_serving_du((3, 4, 5), M_du) == 1
    assert assign_serving_du((0, 1, 2, 4), M_du) == 0
    assert assign_serving_du((0, 1, 6, 7), M_du) == 0
    assert assign_serving_du((3, 6, 7, 4), M_du) == 1


def test_serialisation_round_trip():
    t = build_topology(Geometry(), 12, 3, 6, 4, "balanced", np.random.default_rng(9))
    t2 = Topology.loads(t.dumps())
    assert t2.M_ue == t.M_ue and t2.K_du == t.K_du and t2.M_du == t.M_du
    np.testing.assert_array_equal(t2.ru_pos, t.ru_pos)


def test_reclustering_keeps_serving_du():
    t = build_topology(Geometry(), 12, 3, 6, 4, "balanced", np.random.default_rng(9))
    moved = t.with_user_positions(t.user_pos[::-1].copy())
    np.testing.assert_array_equal(moved.serving_du, t.serving_du)
    assert moved.M_ue == [form_cluster(p, t.ru_pos, 4) for p in t.user_pos[::-1]]


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2 ** 31), U=st.integers(1, 5), per=st.integers(1, 6),
       K=st.integers(1, 20), placement=st.sampled_from(["uniform", "balanced", "clustered"]),
       data=st.data())
def test_membership_invariants(seed, U, per, K, placement, data):
    M = U * per
    cs = data.draw(st.integers(1, M))
    t = build_topology(Geometry(), M, U, K, cs, placement, np.random.default_rng(seed))
    t.check()
    assert sum(len(g) for g in t.K_du) == K
    assert all(len(c) == cs for c in t.M_ue)
    # deterministic clustering
    assert t.M_ue == [form_cluster(p, t.ru_pos, cs) for p in t.user_pos]
