"""Cubulation of an embedded space, the convexity correspondence and the
approximation of nearby finite sets by isomorphic subcomplexes."""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ConditionError, ResourceError, StructuralError
from .median import ConvexSubgraph, MedianGraph, TreeProduct, box_product
from .metric import (
    GraphSpace,
    PointMap,
    QIReport,
    all_pairs,
    all_triples,
    distortion,
    hausdorff,
    quasimedian_defect,
)

DEFAULT_VERTEX_CAP = 5000
EXHAUSTIVE_PAIRS = 200
EXHAUSTIVE_TRIPLES = 80
SAMPLES = 20000


def _pairs_and_triples(points: Sequence, seed: int, pair_cap=EXHAUSTIVE_PAIRS,
                       triple_cap=EXHAUSTIVE_TRIPLES, samples=SAMPLES):
    rng = random.Random(seed)
    pts = list(points)
    if len(pts) <= pair_cap:
        pairs = all_pairs(pts)
    else:
        pairs = [tuple(rng.sample(pts, 2)) for _ in range(samples)]
    if len(pts) <= triple_cap:
        triples = all_triples(pts)
    else:
        triples = [tuple(rng.choice(pts) for _ in range(3)) for _ in range(samples)]
    return pairs, triples


def subtree_hull(tree: GraphSpace, points: Iterable) -> GraphSpace:
    """Smallest subtree containing ``points``."""
    pts = list(dict.fromkeys(points))
    keep = set(pts)
    for p in pts[1:]:
        keep.update(tree.geodesic(pts[0], p))
    return tree.induced(keep)


@dataclass(eq=False)
class CubulationResult:
    source: object
    embedding: PointMap
    ambient: MedianGraph
    closure: frozenset
    closure_connected: bool
    hull: ConvexSubgraph
    complex: MedianGraph
    map: PointMap
    qi: QIReport
    defect: object
    hausdorff: object

    @property
    def hull_rounds(self) -> int:
        return self.hull.iterations

    def summary(self) -> dict:
        return {
            "source_vertices": len(self.map.assignment),
            "ambient_vertices": self.ambient.n,
            "closure_vertices": len(self.closure),
            "closure_connected": self.closure_connected,
            "complex_vertices": self.complex.n,
            "complex_hyperplanes": len(self.complex.hyperplanes),
            "dimension": self.complex.dimension(),
            "dimension_exact": self.complex.dimension_exact,
            "hull_rounds": self.hull_rounds,
            "lambda": self.qi.lam,
            "eps": self.qi.eps,
            "defect": self.defect,
            "hausdorff": self.hausdorff,
        }


def _ambient_for(embedding: PointMap, cap: int) -> tuple[MedianGraph, PointMap]:
    target = embedding.target
    if isinstance(target, MedianGraph):
        return target, embedding
    if isinstance(target, TreeProduct):
        img = embedding.image()
        factors = [subtree_hull(t, [p[i] for p in img]) for i, t in enumerate(target.trees)]
        try:
            amb = box_product(factors, cap=cap)
        except ResourceError as exc:
            raise ResourceError(str(exc), partial={"image": frozenset(img)}) from exc
        return amb, PointMap(embedding.source, amb, dict(embedding.assignment), name=embedding.name)
    raise StructuralError("embedding target must be a median graph or a product of trees")


def cubulate(x, embedding: PointMap, cap: int = DEFAULT_VERTEX_CAP, seed: int = 0) -> CubulationResult:
    """Median closure of the image, its convex hull, and the gated map into it.

    A product-of-trees target is first cut down to the product of the
    subtrees spanned by the image in each factor; the closure and hull of
    the image never leave that box.
    """
    if set(embedding.assignment) != set(x.vertices):
        raise StructuralError("embedding must be total on the source")
    ambient, f = _ambient_for(embedding, cap)
    img = f.image()
    try:
        closure, connected = ambient.median_closure(img, cap=cap)
    except ResourceError as exc:
        raise ResourceError(str(exc), partial={"closure": exc.partial, "image": frozenset(img)}) from exc
    hull = ambient.convex_hull(closure)
    complex_ = ambient.induced_median(hull.vertices) if len(hull) < ambient.n else ambient
    gated = {v: ambient.gate(hull, f(v)) for v in x.vertices}
    if any(gated[v] != f(v) for v in x.vertices):
        raise ConditionError("image point outside its own hull")
    final = PointMap(x, complex_, gated, name="cubulation")
    pairs, triples = _pairs_and_triples(x.vertices, seed)
    qi = distortion(final, pairs) if pairs else QIReport(1, 0, sample_size=0)
    defect = quasimedian_defect(final, triples)
    haus = hausdorff(ambient, img, closure)
    return CubulationResult(x, f, ambient, closure, connected, hull, complex_, final, qi, defect, haus)


def identity_embedding(q: MedianGraph) -> PointMap:
    return PointMap(q, q, {v: v for v in q.vertices}, name="identity")


def recubulate(res: CubulationResult, cap: int = DEFAULT_VERTEX_CAP) -> CubulationResult:
    """Second pass on the output complex with the identity embedding."""
    q = res.complex
    return cubulate(q, identity_embedding(q), cap=cap)


# ---------------------------------------------------------------------------
# Median quasiconvexity and the convexity correspondence
# ---------------------------------------------------------------------------


def _set_distance(space, v, S: Sequence):
    return min(space.distance(v, s) for s in S)


@dataclass(frozen=True)
class QuasiconvexityReport:
    constant: object
    witness: tuple | None
    exhaustive: bool


def quasiconvexity_constant(space, Y: Iterable, budget: int = 200_000, seed: int = 0) -> QuasiconvexityReport:
    """Least ``k`` with ``d(mu(x, y1, y2), Y) <= k`` for every ``x`` and ``y1, y2`` in ``Y``.

    Exhaustive when the number of triples fits ``budget``; otherwise a seeded
    sample of that size, flagged.
    """
    Y = sorted(set(Y), key=space.index)
    if not Y:
        raise StructuralError("empty subset")
    verts = list(space.vertices)
    pairs = list(itertools.combinations_with_replacement(Y, 2))
    total = len(verts) * len(pairs)
    if total <= budget:
        triples, exhaustive = ((a, b, c) for a in verts for b, c in pairs), True
    else:
        rng = random.Random(seed)
        triples = ((rng.choice(verts),) + rng.choice(pairs) for _ in range(budget))
        exhaustive = False
    ymask = np.zeros(len(verts), dtype=bool)
    ymask[[space.index(y) for y in Y]] = True
    D = space.graph.D if hasattr(space, "graph") else space.D
    to_y = D[:, ymask].min(axis=1)
    worst, witness = 0, None
    for a, b, c in triples:
        val = to_y[space.index(space.median(a, b, c))]
        if val > worst:
            worst, witness = int(val), (a, b, c)
    unit = (space.graph if hasattr(space, "graph") else space).unit
    return QuasiconvexityReport(worst * unit, witness, exhaustive)


def is_quasiconvex(space, Y: Iterable, k) -> tuple | None:
    """Brute-force scan; the first triple whose median is farther than ``k``, or None."""
    Y = list(Y)
    for a in space.vertices:
        for b, c in itertools.combinations_with_replacement(Y, 2):
            if _set_distance(space, space.median(a, b, c), Y) > k:
                return (a, b, c)
    return None


def quasi_inverse(res: CubulationResult) -> PointMap:
    """Nearest source point for each vertex of the complex, least id on ties."""
    q = res.complex
    src = list(res.source.vertices)
    idx = [q.index(res.map(v)) for v in src]
    D = q.graph.D[:, idx]
    best = np.argmin(D, axis=1)  # first minimum = least source order
    return PointMap(q, res.source, {v: src[int(best[i])] for i, v in enumerate(q.vertices)}, name="section")


@dataclass
class ConvexityReport:
    subcomplex: ConvexSubgraph
    hausdorff: object
    bound: object
    within_bound: bool
    image_convex: bool
    reverse_k0: object
    reverse_exhaustive: bool


def convexity_correspondence(x, res: CubulationResult, Y: Iterable, k, budget: int = 200_000,
                             seed: int = 0) -> ConvexityReport:
    """Hull of the image of a ``k``-median-quasiconvex ``Y`` and the reverse constant.

    ``bound`` is the quasimedian defect of the cubulation plus the largest
    displacement of an image point of ``Y`` by the gate onto the hull.
    """
    Y = list(dict.fromkeys(Y))
    qc = quasiconvexity_constant(x, Y, budget=budget, seed=seed)
    if qc.constant > k:
        raise ConditionError(f"subset is not {k}-median-quasiconvex", witness=qc.witness)
    q = res.complex
    img = [res.map(y) for y in Y]
    Yp = q.convex_hull(img)
    r = hausdorff(q, img, Yp.vertices)
    displacement = max(q.distance(p, q.gate(Yp, p)) for p in img)
    bound = res.defect + displacement
    rev = reverse_quasiconvexity(res, Yp, budget=budget, seed=seed)
    convex = len(Yp) == len(set(img))
    return ConvexityReport(Yp, r, bound, (r <= bound) if convex else True, convex, rev.constant, rev.exhaustive)


def reverse_quasiconvexity(res: CubulationResult, C: ConvexSubgraph, budget: int = 200_000,
                           seed: int = 0) -> QuasiconvexityReport:
    """Median-quasiconvexity constant of the section image of a convex subcomplex."""
    g = quasi_inverse(res)
    pre = {g(v) for v in C.vertices}
    return quasiconvexity_constant(res.source, pre, budget=budget, seed=seed)


# ---------------------------------------------------------------------------
# Nearby finite sets
# ---------------------------------------------------------------------------


@dataclass
class ApproximationReport:
    hull1: ConvexSubgraph
    hull2: ConvexSubgraph
    input_hausdorff: object
    scale: object
    differing: list
    count_bound: object
    common: list
    core1: frozenset
    core2: frozenset
    isomorphism: dict
    is_isomorphism: bool
    core_hausdorff: object

    @property
    def count_ok(self) -> bool:
        return len(self.differing) <= self.count_bound


def approximate_finite_sets(q: MedianGraph, F1: Iterable, F2: Iterable, K=None) -> ApproximationReport:
    """Hulls of two nearby sets, the hyperplanes crossing exactly one, and the
    isomorphic cores obtained by gating each hull into the other.

    ``K`` is the scale of the input closeness (``d_Haus(F1, F2) <= K``); it
    defaults to the realized Hausdorff distance, at least 1.  The number of
    differing hyperplanes is compared with ``2 |F1| K``.
    """
    F1, F2 = list(dict.fromkeys(F1)), list(dict.fromkeys(F2))
    if len(F1) != len(F2):
        raise StructuralError("sets must have equal size")
    h_in = hausdorff(q, F1, F2)
    K = max(h_in, 1) if K is None else K
    if h_in > K:
        raise StructuralError(f"input Hausdorff distance {h_in} exceeds K={K}")
    Q1, Q2 = q.convex_hull(F1), q.convex_hull(F2)
    H = range(len(q.hyperplanes))
    c1 = {h for h in H if q.crosses(h, Q1.vertices)}
    c2 = {h for h in H if q.crosses(h, Q2.vertices)}
    core1 = frozenset(q.gate(Q1, v) for v in Q2.vertices)
    core2 = frozenset(q.gate(Q2, v) for v in Q1.vertices)
    iso = {v: q.gate(Q2, v) for v in core1}
    ok = len(set(iso.values())) == len(iso) == len(core2) and set(iso.values()) == core2
    if ok:
        ok = all(
            q.graph.is_adjacent(a, b) == q.graph.is_adjacent(iso[a], iso[b])
            for a, b in itertools.combinations(core1, 2)
        )
    if not ok:
        raise ConditionError("gate map between the cores is not an isomorphism")
    return ApproximationReport(
        Q1, Q2, h_in, K, sorted(c1 ^ c2), 2 * len(F1) * K, sorted(c1 & c2),
        core1, core2, iso, ok, hausdorff(q, core1, core2),
    )
