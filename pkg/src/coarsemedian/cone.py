"""Hyperbolic cones on finite bounded metric spaces.

Level ``k`` of the cone is a maximal ``r**k``-separated subset ``V_k`` of the
base; a vertex ``v`` at level ``k`` carries the realized open ball
``B(v) = {z : d(z, v) < 2 r**k}``.  Cone vertices are pairs ``(k, point)``.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property

import numpy as np

from .errors import ConditionError, ParameterError, StructuralError
from .instances import ultrametric_tree_leaves, rooted_tree
from .metric import (
    FiniteMetricSpace,
    GraphSpace,
    PointMap,
    QIReport,
    all_pairs,
    check_metric,
    distortion,
)

CONE_R_MAX = Fraction(1, 6)
COVER_R_BOUND = Fraction(1, 7)  # strict bound once covers are attached


def rescale(m: FiniteMetricSpace, target=Fraction(1, 2)) -> FiniteMetricSpace:
    """Rescale so the diameter is ``target``; the factor is folded into ``m.scale``."""
    diam = m.diameter()
    if m.n < 2 or diam == target:
        return m
    return m.scaled(Fraction(target) / diam)


@dataclass(frozen=True, eq=False)
class NetHierarchy:
    base: FiniteMetricSpace
    r: Fraction
    levels: tuple  # V_0 .. V_Kmax, each a tuple of point ids in insertion order
    order: tuple  # seeded insertion order
    seed: int

    @property
    def k_max(self) -> int:
        return len(self.levels) - 1

    def radius(self, k: int) -> Fraction:
        return 2 * self.r**k

    @cached_property
    def _int(self):
        return self.base.int_matrix

    def _scaled(self, value: Fraction) -> Fraction:
        return value / self._int[1]

    def ball_mask(self, k: int, points, closed=False) -> np.ndarray:
        """Rows: realized balls of radius ``2 r**k`` around ``points``."""
        M, _ = self._int
        rad = self._scaled(self.radius(k))
        rows = M[[self.base.index(p) for p in points]]
        return rows <= rad if closed else rows < rad

    def ball(self, k: int, p) -> frozenset:
        mask = self.ball_mask(k, [p])[0]
        return frozenset(self.base.points[i] for i in np.nonzero(mask)[0])

    def validate(self) -> list[str]:
        """Separation, maximality and ``|V_0| = 1``, checked exactly."""
        M, _ = self._int
        problems = []
        if len(self.levels[0]) != 1:
            problems.append(f"|V_0| = {len(self.levels[0])}")
        for k, V in enumerate(self.levels):
            sep = self._scaled(self.r**k)
            idx = [self.base.index(p) for p in V]
            sub = M[np.ix_(idx, idx)]
            off = ~np.eye(len(idx), dtype=bool)
            if (sub[off] < sep).any():
                problems.append(f"level {k} not {self.r}^{k}-separated")
            if not (M[idx] < sep).any(axis=0).all():
                problems.append(f"level {k} is not maximal")
        return problems


def build_nets(m: FiniteMetricSpace, r, k_max: int, seed: int,
               r_bound: Fraction = CONE_R_MAX, strict: bool = False) -> NetHierarchy:
    """Greedy maximal ``r**k``-separated sets, inserting points in a seeded order."""
    r = Fraction(r)
    if not m.exact:
        raise ParameterError("nets need an exact base metric")
    if not (0 < r <= r_bound) or (strict and r >= r_bound):
        raise ParameterError(f"parameter r={r} outside (0, {r_bound}{')' if strict else ']'}")
    if m.n == 0:
        raise StructuralError("empty base")
    if m.diameter() >= 1:
        raise ParameterError(f"base diameter {m.diameter()} must be < 1; rescale first")
    if k_max < 0:
        raise ParameterError("k_max must be non-negative")
    order = list(m.points)
    random.Random(seed).shuffle(order)
    M, unit = m.int_matrix
    pos = [m.index(p) for p in order]
    levels = []
    for k in range(k_max + 1):
        sep = r**k / unit
        chosen: list[int] = []
        for i in pos:
            if all(M[i, j] >= sep for j in chosen):
                chosen.append(i)
        levels.append(tuple(m.points[i] for i in chosen))
    nets = NetHierarchy(m, r, tuple(levels), tuple(order), seed)
    problems = nets.validate()
    if problems:
        raise ConditionError("; ".join(problems))
    return nets


@dataclass(eq=False)
class ConeGraph:
    graph: GraphSpace
    nets: NetHierarchy
    level: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    @property
    def apex(self):
        return (0, self.nets.levels[0][0])

    @property
    def vertices(self) -> tuple:
        return self.graph.vertices

    def at_level(self, k: int) -> list:
        return [(k, p) for p in self.nets.levels[k]]

    def ball(self, v) -> frozenset:
        k, p = v
        return self.nets.ball(k, p)

    def distance(self, u, v):
        return self.graph.distance(u, v)

    def median(self, x, y, z):
        return self.graph.coarse_median(x, y, z)

    def index(self, v):
        return self.graph.index(v)

    def descending_path(self, v) -> list:
        """Level-monotone path from the apex to ``v`` (least-id parent each step)."""
        path = [v]
        while path[-1][0] > 0:
            k = path[-1][0]
            parents = [w for w in self.graph.neighbours(path[-1]) if w[0] == k - 1]
            path.append(min(parents, key=self.graph.index))
        return path[::-1]


def build_cone(nets: NetHierarchy) -> ConeGraph:
    """Apply both edge rules exactly on realized balls."""
    verts, edges = [], []
    for k, V in enumerate(nets.levels):
        verts.extend((k, p) for p in V)
        closed = nets.ball_mask(k, V, closed=True).astype(np.int64)
        meet = closed @ closed.T > 0
        for i in range(len(V)):
            for j in range(i + 1, len(V)):
                if meet[i, j]:
                    edges.append(((k, V[i]), (k, V[j])))
        if k + 1 < len(nets.levels):
            W = nets.levels[k + 1]
            outer = nets.ball_mask(k, V).astype(np.int64)
            inner = nets.ball_mask(k + 1, W).astype(np.int64)
            # B(w) ⊆ B(v)  iff  no point of B(w) lies outside B(v)
            escapes = inner @ (1 - outer).T
            for j, w in enumerate(W):
                parents = np.nonzero(escapes[j] == 0)[0]
                if parents.size == 0:
                    raise ConditionError(
                        f"cone vertex {(k + 1, w)} has no level-{k} neighbour",
                        witness=(k + 1, w),
                    )
                edges.extend(((k, V[i]), (k + 1, w)) for i in parents)
    g = GraphSpace(verts, edges)
    level = {v: v[0] for v in verts}
    return ConeGraph(g, nets, level, {v: v[1] for v in verts})


def visualize(space, ray_length: int) -> GraphSpace:
    """Attach a pendant path of ``ray_length`` unit edges to every point.

    Original vertex ``v`` becomes ``(v, 0)``; its ray is ``(v, 1) .. (v, R)``.
    """
    g = GraphSpace.from_metric(space) if isinstance(space, FiniteMetricSpace) else space
    verts = [(v, i) for v in g.vertices for i in range(ray_length + 1)]
    edges = [((u, 0), (v, 0), w) for u, v, w in g.edges()]
    edges += [((v, i), (v, i + 1)) for v in g.vertices for i in range(ray_length)]
    out = GraphSpace(verts, edges)
    for u in g.vertices:
        for v in g.vertices:
            if out.distance((u, 0), (v, 0)) != g.distance(u, v):
                raise ConditionError("visualisation changed an original distance", witness=(u, v))
    return out


@dataclass
class TreeBoundaryInstance:
    tree: GraphSpace
    Z: FiniteMetricSpace
    nets: NetHierarchy
    cone: ConeGraph
    correspondence: PointMap
    report: QIReport


def tree_boundary_instance(depth: int, branching: int, r, k_max: int | None = None,
                           seed: int = 0, cap: int = 5000) -> TreeBoundaryInstance:
    """Rooted tree, its leaf ultrametric, the cone on it, and the tree-to-cone map.

    A tree vertex at depth ``k`` goes to the unique level-``k`` net point
    among the leaves below it.
    """
    r = Fraction(r)
    if r > Fraction(1, 4):
        raise ParameterError("tree boundary instances need r <= 1/4")
    tree = rooted_tree(depth, branching, cap=cap)
    Z = ultrametric_tree_leaves(depth, branching, r, cap=cap)
    k_max = depth if k_max is None else k_max
    nets = build_nets(Z, r, k_max, seed)
    cone = build_cone(nets)
    corr = {}
    for u in tree.vertices:
        k = len(u)
        if k > k_max:
            continue
        below = [p for p in nets.levels[k] if p[:k] == u]
        if len(below) != 1:
            raise ConditionError(f"tree vertex {u} sees {len(below)} net points", witness=u)
        corr[u] = (k, below[0])
    f = PointMap(tree, cone, corr, name="tree->cone")
    pairs = all_pairs(list(corr))
    report = distortion(f, pairs) if pairs else QIReport(Fraction(1), Fraction(0))
    return TreeBoundaryInstance(tree, Z, nets, cone, f, report)
