import random
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from coarsemedian.errors import ConditionError, ResourceError, StructuralError
from coarsemedian.instances import dyadic_ultrametric, grid_graph, random_tree, segment_points, two_point
from coarsemedian.median import box_product, halfspace, verify_median_graph
from coarsemedian.metric import PointMap
from coarsemedian.pipeline import (
    approximate_finite_sets,
    convexity_correspondence,
    cubulate,
    identity_embedding,
    is_quasiconvex,
    quasi_inverse,
    quasiconvexity_constant,
    recubulate,
    reverse_quasiconvexity,
    subtree_hull,
)

from helpers import chain

R8 = Fraction(1, 8)


@pytest.fixture(scope="module")
def two_point_run():
    ch = chain(two_point(), R8, 2)
    emb = ch.embed()
    return ch, emb, cubulate(ch.cone, emb.point_map)


@pytest.fixture(scope="module")
def dyadic_run():
    ch = chain(dyadic_ultrametric(4, R8), R8, 3)
    emb = ch.embed()
    return ch, emb, cubulate(ch.cone, emb.point_map)


# -- cubulation -------------------------------------------------------------------


def test_tree_in_itself():
    q = verify_median_graph(random_tree(25, 2))
    res = cubulate(q, identity_embedding(q))
    assert res.closure == set(q.vertices) and res.complex.n == q.n
    assert res.defect == 0 and (res.qi.lam, res.qi.eps) == (1, 0) and res.hausdorff == 0


def test_subtree_hull_spans_the_points():
    t = random_tree(30, 4)
    h = subtree_hull(t, [3, 17, 22])
    spanned = set(t.geodesic(3, 17)) | set(t.geodesic(17, 22)) | set(t.geodesic(3, 22))
    assert set(h.vertices) == spanned and h.is_tree()


@pytest.mark.parametrize("name", ["two_point_run", "dyadic_run"])
def test_cubulation_structure(name, request):
    ch, emb, res = request.getfixturevalue(name)
    assert verify_median_graph(res.complex.graph)
    img = set(emb.point_map.image())
    assert img <= res.closure <= res.hull.vertices
    assert res.ambient.convex_hull(res.closure).vertices == res.hull.vertices
    assert all(res.map(v) == emb.point_map(v) for v in ch.cone.vertices)
    assert res.closure_connected and res.closure == res.hull.vertices
    summary = res.summary()
    assert summary["complex_vertices"] == res.complex.n and summary["source_vertices"] == len(ch.cone.vertices)


def test_two_point_cone_report(two_point_run):
    ch, emb, res = two_point_run
    assert len(ch.cone.vertices) == 5
    assert res.defect == emb.defect
    assert res.qi.lam >= 1 and res.qi.feasible


@pytest.mark.parametrize("name", ["two_point_run", "dyadic_run"])
def test_recubulation_is_idempotent(name, request):
    _, _, res = request.getfixturevalue(name)
    again = recubulate(res)
    assert again.defect == 0 and (again.qi.lam, again.qi.eps) == (1, 0)
    assert again.complex.n == res.complex.n and again.closure == set(res.complex.vertices)


def test_segment_cubulation_round_trip():
    ch = chain(segment_points(9), Fraction(1, 29), 2, strategy="line_dyadic")
    res = cubulate(ch.cone, ch.embed().point_map)
    again = recubulate(res)
    assert again.defect == 0 and (again.qi.lam, again.qi.eps) == (1, 0)


def test_caps_are_explicit(dyadic_run):
    ch, emb, _ = dyadic_run
    with pytest.raises(ResourceError) as err:
        cubulate(ch.cone, emb.point_map, cap=3)
    assert err.value.partial["image"] == set(emb.point_map.image())
    q = verify_median_graph(grid_graph(6, 6))
    corners = {(0, 0): (0, 0), (1, 1): (5, 5), (2, 2): (0, 5), (0, 2): (2, 3)}
    src = verify_median_graph(grid_graph(3, 3))
    f = PointMap(src, q, {v: corners.get(v, (0, 0)) for v in src.vertices})
    with pytest.raises(ResourceError) as err:
        cubulate(src, f, cap=5)
    assert err.value.partial["image"] == {(0, 0), (5, 5), (0, 5), (2, 3)}
    assert len(err.value.partial["closure"]) > 5


def test_partial_embedding_rejected():
    q = verify_median_graph(random_tree(5, 0))
    f = PointMap(q, q, {0: 0}, name="partial")
    with pytest.raises(StructuralError):
        cubulate(q, f)


# -- quasiconvexity --------------------------------------------------------------------


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 4))
def test_quasiconvexity_constant_matches_brute_force(seed, size):
    q = box_product([random_tree(4, seed), random_tree(5, seed + 1)])
    rng = random.Random(seed)
    Y = rng.sample(list(q.vertices), size)
    rep = quasiconvexity_constant(q, Y)
    assert rep.exhaustive
    assert is_quasiconvex(q, Y, rep.constant) is None
    if rep.constant > 0:
        assert is_quasiconvex(q, Y, rep.constant - 1) is not None


def test_convex_sets_have_constant_zero():
    q = verify_median_graph(grid_graph(4, 4))
    assert quasiconvexity_constant(q, q.convex_hull([(0, 1), (2, 3)]).vertices).constant == 0
    spread = quasiconvexity_constant(q, [(0, 0), (3, 3)])
    assert spread.constant == 3 and spread.witness is not None


def test_quasi_inverse_is_a_section():
    q = verify_median_graph(random_tree(12, 5))
    res = cubulate(q, identity_embedding(q))
    g = quasi_inverse(res)
    assert all(g(res.map(v)) == v for v in q.vertices)


# -- convexity correspondence ------------------------------------------------------------


def test_whole_space_and_single_point(dyadic_run):
    ch, _, res = dyadic_run
    cone = ch.cone
    full = convexity_correspondence(cone, res, cone.vertices, k=0)
    assert full.subcomplex.vertices == set(res.complex.vertices)
    assert full.hausdorff <= res.hausdorff + res.defect
    one = convexity_correspondence(cone, res, [cone.apex], k=0)
    assert len(one.subcomplex) == 1 and one.hausdorff == 0 and one.image_convex


def test_geodesic_in_the_cone(dyadic_run):
    ch, _, res = dyadic_run
    cone = ch.cone
    path = cone.graph.geodesic(cone.apex, cone.vertices[-1])
    k = quasiconvexity_constant(cone, path).constant
    rep = convexity_correspondence(cone, res, path, k)
    assert rep.within_bound and rep.reverse_exhaustive
    assert rep.reverse_k0 >= 0


def test_non_quasiconvex_subset_rejected_with_witness():
    q = verify_median_graph(grid_graph(5, 5))
    res = cubulate(q, identity_embedding(q))
    with pytest.raises(ConditionError) as err:
        convexity_correspondence(q, res, [(0, 0), (4, 4)], k=1)
    a, b, c = err.value.witness
    assert {b, c} <= {(0, 0), (4, 4)}


@pytest.mark.parametrize("name", ["two_point_run", "dyadic_run"])
def test_reverse_constant_on_every_halfspace(name, request):
    _, _, res = request.getfixturevalue(name)
    for h in range(len(res.complex.hyperplanes)):
        for side in (True, False):
            rep = reverse_quasiconvexity(res, halfspace(res.complex, h, side))
            assert rep.exhaustive and rep.constant >= 0


def test_reverse_constant_is_zero_for_identity():
    q = verify_median_graph(random_tree(15, 9))
    res = cubulate(q, identity_embedding(q))
    for h in range(len(q.hyperplanes)):
        assert reverse_quasiconvexity(res, halfspace(q, h, True)).constant == 0


# -- nearby finite sets --------------------------------------------------------------


def test_equal_sets():
    q = verify_median_graph(grid_graph(5, 5))
    F = [(0, 0), (3, 1), (1, 4)]
    rep = approximate_finite_sets(q, F, F)
    assert rep.differing == [] and rep.is_isomorphism
    assert all(a == b for a, b in rep.isomorphism.items())
    assert rep.core1 == rep.hull1.vertices and rep.core_hausdorff == 0


@pytest.mark.parametrize("F2,moved", [([(0, 0), (3, 2)], 1), ([(0, 0), (3, 3)], 2)])
def test_shifted_grid_sets(F2, moved):
    q = verify_median_graph(grid_graph(5, 5))
    rep = approximate_finite_sets(q, [(0, 0), (2, 2)], F2)
    assert len(rep.differing) == moved and rep.count_ok and rep.is_isomorphism


def test_sets_must_match_in_size_and_scale():
    q = verify_median_graph(grid_graph(4, 4))
    with pytest.raises(StructuralError):
        approximate_finite_sets(q, [(0, 0)], [(0, 0), (1, 1)])
    with pytest.raises(StructuralError):
        approximate_finite_sets(q, [(0, 0)], [(3, 3)], K=1)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10**6))
def test_random_sets_in_three_trees(seed):
    q = box_product([random_tree(4, seed), random_tree(3, seed + 1), random_tree(4, seed + 2)])
    rng = random.Random(seed)
    V = list(q.vertices)
    F1 = rng.sample(V, 4)
    F2 = [rng.choice(q.graph.neighbours(v)) for v in F1]
    if len(set(F2)) < 4:
        return
    rep = approximate_finite_sets(q, F1, F2)
    assert rep.is_isomorphism and rep.count_ok
    assert rep.core_hausdorff <= 2 * rep.scale
