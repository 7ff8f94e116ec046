import itertools
from fractions import Fraction

import networkx as nx
import pytest
from hypothesis import given, settings, strategies as st

from coarsemedian.cone import build_nets
from coarsemedian.covers import (
    ColouredCoverSequence,
    RootedForest,
    _check_structure,
    build_covers,
    build_trees,
    monotone_violations,
    tree_edge_rule_holds,
    uhat,
    verify_cover_conditions,
    verify_hat_lemmas,
)
from coarsemedian.errors import ParameterError
from coarsemedian.instances import dyadic_ultrametric, grid_points, one_point, segment_points
from coarsemedian.metric import FiniteMetricSpace

from helpers import chain

R8 = Fraction(1, 8)
R29 = Fraction(1, 29)


def nx_tree(t):
    return nx.Graph([(u, v) for u, v, _ in t.edges()]) if t.n > 1 else nx.empty_graph(1)


def grid_coords(side):
    step = Fraction(1, 2) / (side - 1)
    return {p: tuple(i * step for i in p) for p in itertools.product(range(side), repeat=2)}


# -- covers and their conditions ------------------------------------------------


def test_one_point_covers_are_singletons():
    Z = one_point()
    cov = build_covers(Z, R8, 4)
    assert all(cov.elements[(0, k)] == (1,) for k in range(5))
    rep = verify_cover_conditions(cov, build_nets(Z, R8, 5, seed=0))
    assert rep.passed and rep.summary() == dict(C1=True, cover=True, disjoint=True, C3=True, C2=True)


def test_dyadic_covers_are_metric_balls():
    Z = dyadic_ultrametric(6, R8)
    cov = build_covers(Z, R8, 5)
    for k in range(1, 6):
        classes = {frozenset(q for q in Z.points if Z.distance(p, q) < R8**k) for p in Z.points}
        assert {cov.points_of(m) for m in cov.elements[(0, k)]} == classes
    assert verify_cover_conditions(cov, build_nets(Z, R8, 6, seed=4)).passed


@pytest.mark.parametrize("eps", [Fraction(1, 2) + Fraction(1, 100), Fraction(7, 8)])
def test_ultrametric_margin_is_free(eps):
    Z = dyadic_ultrametric(4, R8)
    assert verify_cover_conditions(build_covers(Z, R8, 3, eps=eps), build_nets(Z, R8, 4, seed=0)).passed


def test_segment_line_dyadic():
    Z = segment_points(33)
    cov = build_covers(Z, R29, 3, strategy="line_dyadic")
    assert cov.colours == (0, 1)
    assert verify_cover_conditions(cov, build_nets(Z, R29, 4, seed=0)).passed
    forest = build_trees(cov)
    for c in cov.colours:
        assert nx.is_tree(nx_tree(forest.trees[c]))


def test_grid_strategy_four_colours():
    Z = grid_points(5)
    cov = build_covers(Z, R29, 2, strategy="grid", coords=grid_coords(5))
    assert len(cov.colours) == 4
    assert verify_cover_conditions(cov, build_nets(Z, R29, 3, seed=1)).passed


def test_hand_built_overlap_fails_with_witness():
    Z = segment_points(3, length=Fraction(1, 100))
    cov = ColouredCoverSequence(Z, R8, Fraction(1, 2), (0,), {(0, 0): (0b111,), (0, 1): (0b011, 0b100)},
                                "ultrametric", 1)
    rep = _check_structure(cov)
    assert not rep.passed and not rep.summary()["C3"]
    assert (0, (1, 0), (1, 1)) in rep.c3
    assert rep.c1 == rep.disjoint == rep.cover == []


@pytest.mark.parametrize("kw", [
    dict(r=Fraction(1, 7)),
    dict(r=R8, eps=Fraction(1, 2)),
    dict(r=R8, strategy="line_dyadic"),
    dict(r=R29, strategy="line_dyadic", eps=Fraction(4, 29)),
    dict(r=R8, strategy="spiral"),
])
def test_parameter_errors(kw):
    Z = segment_points(5)
    with pytest.raises(ParameterError):
        build_covers(Z, kw.pop("r"), 2, **kw)


def test_non_ultrametric_rejected():
    with pytest.raises(ParameterError):
        build_covers(segment_points(5), R8, 2)


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 5), st.integers(0, 10**6))
def test_ultrametric_conditions_for_any_seed(depth, seed):
    Z = dyadic_ultrametric(depth, R8)
    cov = build_covers(Z, R8, depth + 1)
    assert verify_cover_conditions(cov, build_nets(Z, R8, depth + 2, seed)).passed


@settings(max_examples=15, deadline=None)
@given(st.integers(2, 40), st.integers(0, 10**6))
def test_line_conditions_for_any_count(count, seed):
    Z = segment_points(count)
    cov = build_covers(Z, R29, 2, strategy="line_dyadic")
    assert verify_cover_conditions(cov, build_nets(Z, R29, 3, seed)).passed


# -- trees -------------------------------------------------------------------------


def test_one_point_trees_are_paths():
    forest = build_trees(build_covers(one_point(), R8, 4))
    t = nx_tree(forest.trees[0])
    assert nx.is_isomorphic(t, nx.path_graph(5))
    assert forest.ancestors(0, (4, 0)) == [(k, 0) for k in range(5)]


def test_binary_depth_three_tree():
    forest = build_trees(build_covers(dyadic_ultrametric(3, R8), R8, 3))
    assert nx.is_isomorphic(nx_tree(forest.trees[0]), nx.balanced_tree(2, 3))


def test_skipped_scales_add_a_root_chain():
    # the base has only two scales, so the deepest level repeats its classes
    Z = dyadic_ultrametric(2, R8)
    forest = build_trees(build_covers(Z, Fraction(1, 10), 3))
    t = nx_tree(forest.trees[0])
    assert nx.is_tree(t) and t.number_of_nodes() == 1 + 2 + 4 + 4


@pytest.mark.parametrize("Z,r,strategy", [
    (dyadic_ultrametric(5, R8), R8, "ultrametric"),
    (segment_points(20), R29, "line_dyadic"),
])
def test_edge_rule_independent_check(Z, r, strategy):
    cov = build_covers(Z, r, 3, strategy)
    forest = build_trees(cov)
    assert all(tree_edge_rule_holds(cov, forest, c) for c in cov.colours)


# -- cone-to-tree maps and the hat sets ---------------------------------------------


def test_one_point_map_and_hats():
    ch = chain(one_point(), R8, 4)
    f = ch.maps[0].assignment
    assert f[ch.cone.apex] == RootedForest.root
    for k in range(1, 5):
        assert f[(k, "z")] == (k - 1, 0)
    for k in range(5):
        h = uhat(ch.cone, ch.forest, ch.maps[0], (k, 0))
        assert h.vertices == {(k, "z")} and h.diameter == 0 and h.ok
    assert uhat(ch.cone, ch.forest, ch.maps[0], (0, 0)).vertices == {ch.cone.apex}


@pytest.mark.parametrize("seed", [0, 5])
def test_dyadic_maps_lipschitz_and_lemmas(seed):
    ch = chain(dyadic_ultrametric(6, R8), R8, 5, seed=seed)
    for c, fmap in ch.maps.items():
        assert fmap.lipschitz_violations == []
        tree = ch.forest.trees[c]
        for u, v, _ in ch.cone.graph.edges():
            assert tree.distance(fmap.assignment[u], fmap.assignment[v]) <= 2
        assert monotone_violations(ch.cone, ch.forest, fmap, ch.cone.vertices) == []
    assert verify_hat_lemmas(ch.cone, ch.forest, ch.maps) == []


def test_segment_maps_and_lemmas():
    ch = chain(segment_points(33), R29, 3, strategy="line_dyadic")
    assert verify_hat_lemmas(ch.cone, ch.forest, ch.maps) == []
    for fmap in ch.maps.values():
        assert monotone_violations(ch.cone, ch.forest, fmap, ch.cone.vertices) == []


# -- product embedding -----------------------------------------------------------------


def test_one_point_embedding():
    emb = chain(one_point(), R8, 5).embed()
    assert emb.qi.lam == 1 and emb.qi.eps <= 1 and emb.exhaustive_pairs


def test_two_point_embedding_is_exhaustive():
    Z = FiniteMetricSpace.from_matrix([0, 1], [[0, Fraction(1, 2)], [Fraction(1, 2), 0]])
    emb = chain(Z, R8, 2).embed()
    assert emb.exhaustive_triples and emb.point_map.source.graph.n == 5
    assert emb.defect <= 2
