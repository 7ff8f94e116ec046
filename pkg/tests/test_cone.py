from fractions import Fraction

import networkx as nx
import pytest
from hypothesis import given, settings, strategies as st

from coarsemedian.cone import build_cone, build_nets, rescale, tree_boundary_instance, visualize
from coarsemedian.errors import ParameterError
from coarsemedian.instances import dyadic_ultrametric, one_point, segment_points, two_point
from coarsemedian.metric import FiniteMetricSpace, GraphSpace, four_point_delta

import oracles


def test_rescale_cases():
    half = two_point()
    assert rescale(half) is half
    assert rescale(one_point()).n == 1
    far = FiniteMetricSpace.from_matrix([0, 1], [[0, 10], [10, 0]])
    r = rescale(far)
    assert r.distance(0, 1) == Fraction(1, 2) and r.scale == Fraction(1, 20)


def test_one_point_nets_and_ray():
    nets = build_nets(one_point(), Fraction(1, 6), 5, seed=0)
    assert all(level == ("z",) for level in nets.levels)
    cone = build_cone(nets)
    assert cone.graph.n == 6
    assert sorted((u, v) for u, v, _ in cone.graph.edges()) == [((k, "z"), (k + 1, "z")) for k in range(5)]


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_two_point_cone(seed):
    nets = build_nets(two_point(), Fraction(1, 6), 2, seed=seed)
    assert len(nets.levels[0]) == 1 and set(nets.levels[1]) == set(nets.levels[2]) == {0, 1}
    cone = build_cone(nets)
    o = cone.apex
    expected = {frozenset(e) for e in [(o, (1, 0)), (o, (1, 1)), ((1, 0), (2, 0)), ((1, 1), (2, 1))]}
    assert cone.graph.n == 5
    assert {frozenset((u, v)) for u, v, _ in cone.graph.edges()} == expected
    assert cone.distance((2, 0), (2, 1)) == 4


def test_dyadic_level_sizes_and_separation():
    Z = dyadic_ultrametric(6, Fraction(1, 8))
    nets = build_nets(Z, Fraction(1, 8), 7, seed=3)
    assert [len(V) for V in nets.levels] == [1, 2, 4, 8, 16, 32, 64, 64]
    assert nets.validate() == []
    d = oracles.metric_dict(Z)
    for k, V in enumerate(nets.levels):
        sep = Fraction(1, 8) ** k
        assert all(d[(a, b)] >= sep for a in V for b in V if a != b)
        assert all(any(d[(p, v)] < sep for v in V) for p in Z.points)


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 12), st.sampled_from([Fraction(1, 6), Fraction(1, 8), Fraction(1, 10)]),
       st.integers(0, 4), st.integers(0, 1000))
def test_cone_edges_match_oracle(count, r, k_max, seed):
    Z = segment_points(count)
    nets = build_nets(Z, r, k_max, seed)
    cone = build_cone(nets)
    got = {frozenset((u, v)) for u, v, _ in cone.graph.edges()}
    assert got == oracles.cone_edges(Z.points, oracles.metric_dict(Z), nets.levels, r)


def test_descending_path_is_level_monotone():
    cone = build_cone(build_nets(dyadic_ultrametric(4, Fraction(1, 8)), Fraction(1, 8), 4, seed=0))
    for v in cone.vertices:
        path = cone.descending_path(v)
        assert path[0] == cone.apex and path[-1] == v
        assert [w[0] for w in path] == list(range(v[0] + 1))


@pytest.mark.parametrize("r", [Fraction(0), Fraction(1, 5), Fraction(-1, 8)])
def test_r_out_of_range(r):
    with pytest.raises(ParameterError):
        build_nets(two_point(), r, 2, seed=0)


def test_diameter_must_be_below_one():
    far = FiniteMetricSpace.from_matrix([0, 1], [[0, 1], [1, 0]])
    with pytest.raises(ParameterError):
        build_nets(far, Fraction(1, 8), 2, seed=0)


def test_visualize_ray_and_triangle():
    ray = visualize(GraphSpace(["a"], []), 3)
    assert ray.n == 4 and ray.distance(("a", 0), ("a", 3)) == 3
    tri = GraphSpace([0, 1, 2], [(0, 1), (1, 2), (0, 2)])
    vis = visualize(tri, 2)
    assert vis.n == 9
    assert all(vis.distance((u, 0), (v, 0)) == tri.distance(u, v) for u in range(3) for v in range(3))
    assert vis.distance((0, 2), (1, 2)) == 5


def test_tree_boundary_small_depths():
    flat = tree_boundary_instance(0, 2, Fraction(1, 6), k_max=4)
    assert flat.cone.graph.n == 5 and flat.Z.n == 1
    one = tree_boundary_instance(1, 2, Fraction(1, 6), k_max=2)
    assert one.cone.graph.n == 5 and one.cone.distance((2, (0,)), (2, (1,))) == 4


def test_tree_boundary_depth_five_distortion():
    inst = tree_boundary_instance(5, 2, Fraction(1, 8))
    assert inst.report.lam <= 3
    assert nx.is_tree(nx.Graph([(u, v) for u, v, _ in inst.tree.edges()]))


def test_cone_delta_is_small_across_k_max():
    Z = dyadic_ultrametric(4, Fraction(1, 8))
    deltas = [four_point_delta(build_cone(build_nets(Z, Fraction(1, 8), k, seed=0)).graph) for k in (2, 3, 4)]
    assert max(deltas) - min(deltas) <= 1
