"""Coloured cover sequences, the rooted trees they induce, and the maps from
the cone into those trees.

Cover elements are realized point subsets of the base, held internally as
integer bitmasks over the base's point order.  Tree vertices are pairs
``(level, j)`` where ``j`` indexes the element within its colour and level;
the root of every colour is ``(0, 0)`` (the whole base).
"""

from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

from .cone import COVER_R_BOUND, ConeGraph, NetHierarchy
from .errors import ConditionError, ParameterError, StructuralError
from .median import TreeProduct
from .metric import (
    FiniteMetricSpace,
    GraphSpace,
    PointMap,
    QIReport,
    all_pairs,
    all_triples,
    as_fraction,
    distortion,
    quasimedian_defect,
)

STRATEGIES = ("ultrametric", "line_dyadic", "grid")


def _bits(mask: np.ndarray) -> int:
    return int.from_bytes(np.packbits(mask, bitorder="little").tobytes(), "little")


def _popcount(x: int) -> int:
    return bin(x).count("1")


@dataclass(eq=False)
class ColouredCoverSequence:
    base: FiniteMetricSpace
    r: Fraction
    eps: Fraction
    colours: tuple
    elements: dict  # (colour, level) -> tuple of bitmasks, sorted
    strategy: str
    k_max: int

    def members(self, c, k) -> tuple:
        return self.elements[(c, k)]

    def points_of(self, mask: int) -> frozenset:
        return frozenset(p for i, p in enumerate(self.base.points) if mask >> i & 1)

    def subset(self, c, node) -> frozenset:
        k, j = node
        return self.points_of(self.elements[(c, k)][j])

    def nominal_diameter(self, k: int) -> Fraction:
        return self.r**k

    def nodes(self, c) -> list:
        return [(k, j) for k in range(self.k_max + 1) for j in range(len(self.elements[(c, k)]))]

    @cached_property
    def _int(self):
        return self.base.int_matrix

    def diameter(self, mask: int) -> Fraction:
        M, unit = self._int
        idx = [i for i in range(self.base.n) if mask >> i & 1]
        if len(idx) < 2:
            return Fraction(0)
        return int(M[np.ix_(idx, idx)].max()) * unit

    def neighbourhood(self, mask: int, radius: Fraction) -> int:
        M, unit = self._int
        idx = [i for i in range(self.base.n) if mask >> i & 1]
        return _bits((M[idx] < radius / unit).any(axis=0))

    def as_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "r": str(self.r),
            "eps": str(self.eps),
            "k_max": self.k_max,
            "colours": [list(c) if isinstance(c, tuple) else c for c in self.colours],
            "levels": [
                {
                    "colour": list(c) if isinstance(c, tuple) else c,
                    "level": k,
                    "nominal_diameter": str(self.nominal_diameter(k)),
                    "sets": [sorted(self.points_of(m), key=self.base.index) for m in self.elements[(c, k)]],
                }
                for c in self.colours
                for k in range(self.k_max + 1)
            ],
        }


# ---------------------------------------------------------------------------
# Condition checks
# ---------------------------------------------------------------------------


@dataclass
class ConditionReport:
    c1: list = field(default_factory=list)
    cover: list = field(default_factory=list)
    disjoint: list = field(default_factory=list)
    c3: list = field(default_factory=list)
    c2: list | None = None

    @property
    def passed(self) -> bool:
        return not (self.c1 or self.cover or self.disjoint or self.c3 or self.c2)

    def summary(self) -> dict:
        out = {
            "C1": not self.c1,
            "cover": not self.cover,
            "disjoint": not self.disjoint,
            "C3": not self.c3,
        }
        if self.c2 is not None:
            out["C2"] = not self.c2
        return out


def _check_structure(cov: ColouredCoverSequence) -> ConditionReport:
    rep = ConditionReport()
    full = (1 << cov.base.n) - 1
    for c in cov.colours:
        if cov.elements[(c, 0)] != (full,):
            rep.c1.append(("level0", c))
    for k in range(cov.k_max + 1):
        union = 0
        for c in cov.colours:
            sets = cov.elements[(c, k)]
            for m in sets:
                union |= m
                if cov.diameter(m) >= cov.r**k:
                    rep.c1.append((c, k, m))
            for (i, a), (j, b) in itertools.combinations(enumerate(sets), 2):
                if a & b:
                    rep.disjoint.append((c, k, i, j))
        if union != full:
            rep.cover.append((k, full & ~union))
    for c in cov.colours:
        nodes = cov.nodes(c)
        nbhd = {
            (k, j): cov.neighbourhood(cov.elements[(c, k)][j], cov.eps * cov.r**k)
            for k, j in nodes
        }
        for (k, j), (k2, j2) in itertools.product(nodes, repeat=2):
            if k > k2 or (k, j) == (k2, j2):
                continue
            U = cov.elements[(c, k)][j]
            N = nbhd[(k2, j2)]
            if N & U and N & ~U:
                rep.c3.append((c, (k, j), (k2, j2)))
    return rep


def verify_cover_conditions(cov: ColouredCoverSequence, nets: NetHierarchy) -> ConditionReport:
    """(C1), cover, disjointness and (C3) on the cover; (C2) against ``nets``."""
    if nets.base is not cov.base and nets.base.points != cov.base.points:
        raise StructuralError("covers and nets live on different bases")
    if nets.r != cov.r:
        raise StructuralError(f"covers use r={cov.r} but nets use r={nets.r}")
    rep = _check_structure(cov)
    rep.c2 = []
    levels = min(cov.k_max, nets.k_max - 1)
    for k in range(levels + 1):
        owners = [m for c in cov.colours for m in cov.elements[(c, k)]]
        V = nets.levels[k + 1]
        for p, row in zip(V, nets.ball_mask(k + 1, V)):
            b = _bits(row)
            if not any(b & ~m == 0 for m in owners):
                rep.c2.append((k + 1, p))
    return rep


# ---------------------------------------------------------------------------
# Constructors
# ---------------------------------------------------------------------------


def _is_ultrametric(m: FiniteMetricSpace) -> bool:
    M, _ = m.int_matrix
    for y in range(m.n):
        if (M > np.maximum(M[:, y][:, None], M[y][None, :])).any():
            return False
    return True


def _ultrametric_levels(m: FiniteMetricSpace, r: Fraction, k_max: int) -> dict:
    M, unit = m.int_matrix
    out = {}
    for k in range(1, k_max + 1):
        close = M < r**k / unit
        seen = 0
        classes = []
        for i in range(m.n):
            if seen >> i & 1:
                continue
            cls = _bits(close[i])
            seen |= cls
            classes.append(cls)
        out[k] = classes
    return out


def line_coordinates(m: FiniteMetricSpace) -> dict:
    """Isometric coordinates on the real line, anchored at a diameter endpoint."""
    M, unit = m.int_matrix
    a = int(np.unravel_index(np.argmax(M), M.shape)[0]) if m.n > 1 else 0
    x = {p: int(M[a, i]) * unit for i, p in enumerate(m.points)}
    for i, p in enumerate(m.points):
        for j, q in enumerate(m.points):
            if int(M[i, j]) * unit != abs(x[p] - x[q]):
                raise ParameterError("base is not isometric to a subset of the line")
    return {p: (x[p],) for p in m.points}


def _grid_levels(m: FiniteMetricSpace, coords: Mapping, r: Fraction, eps: Fraction,
                 k_max: int) -> tuple[tuple, dict]:
    dim = len(next(iter(coords.values())))
    colours = tuple(itertools.product((0, 1), repeat=dim))
    pts = [tuple(as_fraction(v) for v in coords[p]) for p in m.points]
    out = {}
    for k in range(1, k_max + 1):
        period = r**k
        groups: dict = {}
        for i, x in enumerate(pts):
            for col in colours:
                cell = []
                for xi, ci in zip(x, col):
                    shifted = xi - ci * period / 2
                    j = math.floor(shifted / period)
                    off = shifted - j * period
                    if not (eps * period <= off < period - eps * period):
                        break
                    cell.append(j)
                else:
                    key = (col, tuple(cell))
                    groups[key] = groups.get(key, 0) | (1 << i)
        for col in colours:
            out[(col, k)] = [mask for (c, _), mask in sorted(groups.items()) if c == col]
    return colours, out


def default_eps(strategy: str, r: Fraction) -> Fraction:
    if strategy == "ultrametric":
        return 1 - r
    return 5 * r


def _validate_grid_params(r: Fraction, eps: Fraction):
    if r.numerator != 1 or r.denominator % 2 == 0:
        raise ParameterError(f"line/grid covers need r = 1/m with m odd, got {r}")
    t = eps / r
    if t.denominator != 1 or t <= 4:
        raise ParameterError(f"eps must be an integer multiple t*r with t >= 5, got {eps}")
    if eps + 2 * r > Fraction(1, 4):
        raise ParameterError(f"need eps + 2r <= 1/4, got {eps + 2 * r}")


def build_covers(m: FiniteMetricSpace, r, k_max: int, strategy: str = "ultrametric",
                 eps=None, coords: Mapping | None = None) -> ColouredCoverSequence:
    """Coloured covers for one of the supported space classes.

    Validity ranges (all with ``r < 1/7`` and ``r < eps/4``):

    * ``ultrametric``: one colour; level-``k`` sets are the classes of
      ``d < r**k``.  Any ``eps < 1`` works; default ``1 - r``.
    * ``line_dyadic``: two colours of half-open cells ``[g + eps p, g + p - eps p)``
      with ``p = r**k`` on the grids ``p Z`` and ``p Z + p/2``.  Needs
      ``r = 1/m`` with ``m`` odd, ``eps = t r`` with integer ``t >= 5`` and
      ``eps + 2 r <= 1/4``; default ``eps = 5 r``.
    * ``grid``: the same cells on every axis of an l-infinity grid, ``2**d``
      colours; ``coords`` must be supplied.
    """
    r = Fraction(r)
    if strategy not in STRATEGIES:
        raise ParameterError(f"unknown strategy {strategy!r}")
    if not (0 < r < COVER_R_BOUND):
        raise ParameterError(f"covers need 0 < r < 1/7, got {r}")
    if m.diameter() >= 1:
        raise ParameterError("base diameter must be < 1")
    eps = default_eps(strategy, r) if eps is None else Fraction(eps)
    if not (4 * r < eps < 1):
        raise ParameterError(f"need 4r < eps < 1, got r={r}, eps={eps}")
    full = (1 << m.n) - 1
    if strategy == "ultrametric":
        if not _is_ultrametric(m):
            raise ParameterError("base is not an ultrametric")
        colours = (0,)
        levels = {(0, k): v for k, v in _ultrametric_levels(m, r, k_max).items()}
    else:
        _validate_grid_params(r, eps)
        if strategy == "line_dyadic":
            coords = line_coordinates(m) if coords is None else coords
            if len(next(iter(coords.values()))) != 1:
                raise ParameterError("line_dyadic needs one-dimensional coordinates")
        elif coords is None:
            raise ParameterError("grid covers need explicit coordinates")
        check = FiniteMetricSpace.from_coords({p: coords[p] for p in m.points}, norm="linf")
        if check.dist != m.dist:
            raise ParameterError("metric is not the l-infinity metric of the coordinates")
        colours, levels = _grid_levels(m, coords, r, eps, k_max)
        if strategy == "line_dyadic":
            colours = tuple(c[0] for c in colours)
            levels = {(c[0], k): v for (c, k), v in levels.items()}
    elements = {(c, 0): (full,) for c in colours}
    for (c, k), sets in levels.items():
        elements[(c, k)] = tuple(sorted(sets, key=lambda s: (s & -s, s)))
    cov = ColouredCoverSequence(m, r, eps, colours, elements, strategy, k_max)
    rep = _check_structure(cov)
    if not rep.passed:
        witness = (rep.c1 or rep.cover or rep.disjoint or rep.c3)[0]
        raise ConditionError(f"cover conditions fail: {rep.summary()}", witness=witness)
    return cov


# ---------------------------------------------------------------------------
# Trees
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class RootedForest:
    covers: ColouredCoverSequence
    parent: dict  # colour -> {node: parent node}
    trees: dict  # colour -> GraphSpace

    root = (0, 0)

    def tree(self, c) -> GraphSpace:
        return self.trees[c]

    def ancestors(self, c, node) -> list:
        """Root-to-node path ``[o_c, ..., node]``."""
        path = [node]
        par = self.parent[c]
        while path[-1] in par:
            path.append(par[path[-1]])
        return path[::-1]


def build_trees(cov: ColouredCoverSequence) -> RootedForest:
    """Join each element to the containing element of the largest lower level."""
    parents, trees = {}, {}
    for c in cov.colours:
        par = {}
        for k in range(1, cov.k_max + 1):
            for j, U in enumerate(cov.elements[(c, k)]):
                for k2 in range(k - 1, -1, -1):
                    hits = [i for i, W in enumerate(cov.elements[(c, k2)]) if U & ~W == 0]
                    if len(hits) > 1:
                        raise ConditionError("two same-level parents", witness=(c, k, j))
                    if hits:
                        par[(k, j)] = (k2, hits[0])
                        break
                else:
                    raise ConditionError("element without a parent", witness=(c, k, j))
        t = GraphSpace(cov.nodes(c), [(p, v) for v, p in par.items()])
        if not t.is_tree():
            raise ConditionError(f"T_{c} is not a tree")
        parents[c] = par
        trees[c] = t
    return RootedForest(cov, parents, trees)


def tree_edge_rule_holds(cov: ColouredCoverSequence, forest: RootedForest, c) -> bool:
    """Independent evaluation of the edge rule against the built tree."""
    nodes = cov.nodes(c)
    el = cov.elements
    expected = set()
    for (k, j), (k2, j2) in itertools.permutations(nodes, 2):
        if k >= k2:
            continue
        U, U2 = el[(c, k)][j], el[(c, k2)][j2]
        if U2 & ~U:
            continue
        if any(
            U2 & ~el[(c, k3)][i] == 0
            for k3 in range(k + 1, k2)
            for i in range(len(el[(c, k3)]))
        ):
            continue
        expected.add(((k, j), (k2, j2)))
    got = {(p, v) for v, p in forest.parent[c].items()}
    return expected == got


# ---------------------------------------------------------------------------
# Cone-to-tree maps
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class ConeTreeMap:
    colour: object
    assignment: dict
    point_map: PointMap
    lipschitz_violations: list


def map_fc(cone: ConeGraph, forest: RootedForest, c) -> ConeTreeMap:
    """``f_c(v)``: the deepest same-colour element of level below ``level(v)``
    containing ``B(v)``; the apex goes to the root."""
    cov = forest.covers
    nets = cone.nets
    if nets.r != cov.r or nets.base.points != cov.base.points:
        raise StructuralError("cone and covers disagree on base or r")
    f = {}
    for v in cone.vertices:
        k, p = v
        if k == 0:
            f[v] = RootedForest.root
            continue
        b = _bits(nets.ball_mask(k, [p])[0])
        for k2 in range(min(k - 1, cov.k_max), -1, -1):
            hits = [i for i, W in enumerate(cov.elements[(c, k2)]) if b & ~W == 0]
            if hits:
                f[v] = (k2, hits[0])
                break
        else:
            raise ConditionError("no containing element", witness=v)
    tree = forest.trees[c]
    bad = [
        (u, v)
        for u, v, _ in cone.graph.edges()
        if tree.distance(f[u], f[v]) > 2
    ]
    pm = PointMap(cone, tree, f, name=f"f_{c}")
    out = ConeTreeMap(c, f, pm, bad)
    if bad:
        raise ConditionError(f"f_{c} is not 2-Lipschitz", witness=bad[0])
    return out


@dataclass(frozen=True)
class UHat:
    node: tuple
    vertices: frozenset
    diameter: int
    on_path: bool
    within_two: bool

    @property
    def ok(self) -> bool:
        return bool(self.vertices) and self.diameter <= 2 and self.on_path and self.within_two


def uhat(cone: ConeGraph, forest: RootedForest, fmap: ConeTreeMap, node) -> UHat:
    """Net points at ``node``'s level whose balls meet it, with both lemma checks."""
    c = fmap.colour
    cov = forest.covers
    k, j = node
    if k > cone.nets.k_max:
        raise StructuralError(f"level {k} beyond the cone depth")
    U = cov.elements[(c, k)][j]
    V = cone.nets.levels[k]
    hat = [(k, p) for p, row in zip(V, cone.nets.ball_mask(k, V)) if _bits(row) & U]
    diam = max((cone.distance(a, b) for a in hat for b in hat), default=0)
    path = forest.ancestors(c, node)
    tree = forest.trees[c]
    on_path = all(fmap.assignment[v] in path for v in hat)
    close = all(tree.distance(fmap.assignment[v], node) <= 2 for v in hat)
    return UHat(node, frozenset(hat), diam, on_path, close)


def verify_hat_lemmas(cone: ConeGraph, forest: RootedForest, maps: Mapping) -> list[UHat]:
    """Every cover element up to the cone depth; returns the failures."""
    bad = []
    for c, fmap in maps.items():
        for node in forest.covers.nodes(c):
            if node[0] > cone.nets.k_max:
                continue
            h = uhat(cone, forest, fmap, node)
            if not h.ok:
                bad.append(h)
    return bad


def monotone_violations(cone: ConeGraph, forest: RootedForest, fmap: ConeTreeMap,
                        targets) -> list:
    """Descending apex paths whose images are not ordered by ancestry."""
    bad = []
    for v in targets:
        imgs = [fmap.assignment[w] for w in cone.descending_path(v)]
        for a, b in zip(imgs, imgs[1:]):
            if a not in forest.ancestors(fmap.colour, b):
                bad.append((v, a, b))
                break
    return bad


# ---------------------------------------------------------------------------
# Product embedding
# ---------------------------------------------------------------------------


@dataclass
class ProductEmbedding:
    point_map: PointMap
    qi: QIReport
    defect: object
    exhaustive_pairs: bool
    exhaustive_triples: bool


def embed_product(cone: ConeGraph, forest: RootedForest, maps: Mapping,
                  pair_cap: int = 200, triple_cap: int = 80, samples: int = 20000,
                  seed: int = 0) -> ProductEmbedding:
    """``v -> (f_c(v))_c`` into the l1 product of the colour trees.

    Pairs are exhaustive when the cone has at most ``pair_cap`` vertices and
    triples when it has at most ``triple_cap``; otherwise seeded samples.
    """
    colours = list(forest.covers.colours)
    target = TreeProduct([forest.trees[c] for c in colours])
    assign = {v: tuple(maps[c].assignment[v] for c in colours) for v in cone.vertices}
    f = PointMap(cone, target, assign, name="product")
    verts = list(cone.vertices)
    rng = random.Random(seed)
    if len(verts) <= pair_cap:
        pairs, ex_p = all_pairs(verts), True
    else:
        pairs, ex_p = [tuple(rng.sample(verts, 2)) for _ in range(samples)], False
    if len(verts) <= triple_cap:
        triples, ex_t = all_triples(verts), True
    else:
        triples, ex_t = [tuple(rng.choice(verts) for _ in range(3)) for _ in range(samples)], False
    return ProductEmbedding(f, distortion(f, pairs), quasimedian_defect(f, triples), ex_p, ex_t)
