"""Median graphs as 0-skeleta of CAT(0) cube complexes.

Hyperplanes are Djoković–Winkler classes, found by splitting along one edge
at a time: for an edge ``ab`` the half-space of ``a`` is ``{w : d(w,a) < d(w,b)}``
and the class consists of all edges with one end on each side.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import ConditionError, ResourceError, StructuralError
from .metric import GraphSpace, PointMap

EXHAUSTIVE_TRIPLE_CAP = 150
SAMPLED_TRIPLES = 4000
CLIQUE_BUDGET = 200_000  # branch-and-bound calls before falling back to greedy


@dataclass(frozen=True)
class Counterexample:
    triple: tuple
    intersection: frozenset

    def __bool__(self):
        return False


@dataclass(frozen=True)
class Hyperplane:
    id: int
    edges: frozenset
    negative: frozenset
    positive: frozenset

    def separates(self, x, y) -> bool:
        return (x in self.positive) != (y in self.positive)


def _interval_counts(D: np.ndarray, x: int, y: int) -> np.ndarray:
    """For each z, the size of I(x,y) ∩ I(y,z) ∩ I(x,z)."""
    V = np.nonzero(D[x] + D[y] == D[x, y])[0]
    DV = D[V]
    on_xz = DV + D[x, V][:, None] == D[x][None, :]
    on_yz = DV + D[y, V][:, None] == D[y][None, :]
    return (on_xz & on_yz).sum(axis=0)


def interval_intersection(g: GraphSpace, x, y, z) -> frozenset:
    """Brute-force I(x,y) ∩ I(y,z) ∩ I(x,z)."""
    D = g.D
    a, b, c = g.index(x), g.index(y), g.index(z)
    mask = (
        (D[a] + D[b] == D[a, b])
        & (D[b] + D[c] == D[b, c])
        & (D[a] + D[c] == D[a, c])
    )
    return frozenset(g.vertices[i] for i in np.nonzero(mask)[0])


def _bipartite(g: GraphSpace) -> bool:
    parity = g.D[0] % 2
    return all(parity[g.index(u)] != parity[g.index(v)] for u, v, _ in g.edges())


def verify_median_graph(g: GraphSpace, exhaustive_cap: int = EXHAUSTIVE_TRIPLE_CAP,
                        samples: int = SAMPLED_TRIPLES, seed: int = 0):
    """Return a :class:`MedianGraph`, or a :class:`Counterexample` triple.

    All triples are scanned when ``g.n <= exhaustive_cap``; otherwise
    ``samples`` seeded random triples are checked and the result is flagged
    as sampled.
    """
    if not g.unit_lengths:
        raise StructuralError("median graphs need unit edge lengths")
    D = g.D.astype(np.int64)
    n = g.n
    if n <= exhaustive_cap:
        for x in range(n):
            for y in range(x, n):
                counts = _interval_counts(D, x, y)
                bad = np.nonzero(counts != 1)[0]
                if bad.size:
                    z = g.vertices[int(bad[0])]
                    t = (g.vertices[x], g.vertices[y], z)
                    return Counterexample(t, interval_intersection(g, *t))
        exhaustive = True
    else:
        rng = random.Random(seed)
        for _ in range(samples):
            t = tuple(g.vertices[rng.randrange(n)] for _ in range(3))
            meet = interval_intersection(g, *t)
            if len(meet) != 1:
                return Counterexample(t, meet)
        exhaustive = False
    if not _bipartite(g):
        # unreachable for genuine median graphs; kept as an independent check
        raise ConditionError("median triple scan passed but graph is not bipartite")
    return MedianGraph(g, exhaustive=exhaustive)


class MedianGraph:
    """A verified median graph.  Construct through :func:`verify_median_graph`."""

    def __init__(self, graph: GraphSpace, exhaustive: bool = True):
        self.graph = graph
        self.exhaustive = exhaustive
        self.verified = True
        self._D = graph.D.astype(np.int64)

    # -- delegation -----------------------------------------------------------

    @property
    def vertices(self) -> tuple:
        return self.graph.vertices

    @property
    def n(self) -> int:
        return self.graph.n

    def index(self, v) -> int:
        return self.graph.index(v)

    def distance(self, u, v) -> int:
        return int(self._D[self.index(u), self.index(v)])

    def __contains__(self, v):
        return v in self.graph

    def __repr__(self):
        return f"MedianGraph(n={self.n}, hyperplanes={len(self.hyperplanes)})"

    # -- medians --------------------------------------------------------------

    def median(self, x, y, z):
        """The unique vertex on geodesics between each pair."""
        D = self._D
        total = D[self.index(x)] + D[self.index(y)] + D[self.index(z)]
        return self.vertices[int(np.argmin(total))]

    def interval_mask(self, x, y) -> np.ndarray:
        a, b = self.index(x), self.index(y)
        return self._D[a] + self._D[b] == self._D[a, b]

    def interval(self, x, y) -> frozenset:
        return frozenset(self.vertices[i] for i in np.nonzero(self.interval_mask(x, y))[0])

    # -- hyperplanes ----------------------------------------------------------

    @cached_property
    def _hyperplane_data(self) -> tuple[list[Hyperplane], np.ndarray, dict]:
        D = self._D
        V = self.vertices
        edges = [(self.index(u), self.index(v)) for u, v, _ in self.graph.edges()]
        label: dict[tuple[int, int], int] = {}
        columns = []
        hyps = []
        eu = np.array([e[0] for e in edges], dtype=np.int64)
        ev = np.array([e[1] for e in edges], dtype=np.int64)
        for a, b in edges:
            if (a, b) in label:
                continue
            h = len(hyps)
            pos = D[b] < D[a]
            cut = np.nonzero(pos[eu] != pos[ev])[0]
            cls = [edges[i] for i in cut]
            for e in cls:
                if e in label:
                    raise ConditionError("edge in two hyperplane classes", witness=e)
                label[e] = h
            columns.append(pos)
            hyps.append(
                Hyperplane(
                    h,
                    frozenset((V[u], V[v]) for u, v in cls),
                    frozenset(V[i] for i in np.nonzero(~pos)[0]),
                    frozenset(V[i] for i in np.nonzero(pos)[0]),
                )
            )
        sides = (
            np.column_stack(columns) if columns else np.zeros((self.n, 0), dtype=bool)
        )
        edge_label = {(V[u], V[v]): h for (u, v), h in label.items()}
        return hyps, sides, edge_label

    @property
    def hyperplanes(self) -> list[Hyperplane]:
        return self._hyperplane_data[0]

    @property
    def sides(self) -> np.ndarray:
        """Boolean ``n x H`` matrix: ``sides[v, h]`` iff ``v`` is on the positive side."""
        return self._hyperplane_data[1]

    def edge_hyperplane(self) -> dict:
        return self._hyperplane_data[2]

    def separating(self, x, y) -> list[int]:
        s = self.sides
        return [int(h) for h in np.nonzero(s[self.index(x)] != s[self.index(y)])[0]]

    def hamming_matrix(self) -> np.ndarray:
        s = self.sides.astype(np.int64)
        return s @ (1 - s).T + (1 - s) @ s.T

    @cached_property
    def crossing(self) -> np.ndarray:
        s = self.sides.astype(np.int64)
        t = 1 - s
        return (
            ((s.T @ s) > 0) & ((s.T @ t) > 0) & ((t.T @ s) > 0) & ((t.T @ t) > 0)
        )

    @cached_property
    def _dimension(self) -> tuple[int, bool]:
        H = len(self.hyperplanes)
        if H == 0:
            return 0, True
        X = self.crossing
        nbrs = [frozenset(np.nonzero(X[i])[0].tolist()) - {i} for i in range(H)]
        exact = _max_clique(nbrs, CLIQUE_BUDGET)
        if exact is not None:
            return exact, True
        order = sorted(range(H), key=lambda i: (-len(nbrs[i]), i))
        clique: list[int] = []
        for i in order:
            if all(i in nbrs[j] for j in clique):
                clique.append(i)
        return len(clique), False

    def dimension(self) -> int:
        """Largest pairwise-crossing set of hyperplanes.

        Exact when branch and bound finishes within ``CLIQUE_BUDGET`` calls,
        a greedy lower bound otherwise (see :attr:`dimension_exact`).  A single vertex has dimension 0.
        """
        return self._dimension[0]

    @property
    def dimension_exact(self) -> bool:
        return self._dimension[1]

    # -- convexity ------------------------------------------------------------

    def _mask(self, S: Iterable) -> np.ndarray:
        m = np.zeros(self.n, dtype=bool)
        m[[self.index(v) for v in S]] = True
        return m

    def halfspace_hull_mask(self, S: Iterable) -> np.ndarray:
        """Intersection of all half-spaces containing ``S``."""
        m = self._mask(S)
        if not m.any():
            raise StructuralError("hull of an empty set")
        return self._halfspace_hull(m)

    def _halfspace_hull(self, m: np.ndarray) -> np.ndarray:
        s = self.sides
        inside = s[m]
        keep = np.ones(self.n, dtype=bool)
        for h in np.nonzero(inside.all(axis=0))[0]:
            keep &= s[:, h]
        for h in np.nonzero((~inside).all(axis=0))[0]:
            keep &= ~s[:, h]
        return keep

    def is_convex(self, S: Iterable) -> bool:
        S = list(S)
        return bool(S) and bool((self.halfspace_hull_mask(S) == self._mask(S)).all())

    def _interval_union(self, Y: np.ndarray, fresh: np.ndarray) -> np.ndarray:
        D = self._D
        Yi = np.nonzero(Y)[0]
        DY = D[Yi]
        out = Y.copy()
        for a in np.nonzero(fresh)[0]:
            out |= (DY + D[a][None, :] == D[a, Yi][:, None]).any(axis=0)
        return out

    def convex_hull(self, S: Iterable) -> ConvexSubgraph:
        """Hull by iterated medians ``Y_{i+1} = mu(Q, Y_i, Y_i)``.

        ``mu(Q, a, b)`` is the interval ``I(a, b)``, so each round adds the
        intervals between pairs involving a vertex that is new in ``Y_i``.
        """
        Y = self._mask(S)
        if not Y.any():
            raise StructuralError("hull of an empty set")
        target = self.halfspace_hull_mask(S)
        fresh = Y.copy()
        rounds = 0
        while not (Y == target).all():
            nxt = self._interval_union(Y, fresh)
            if (nxt == Y).all():
                raise ConditionError("median iteration stalled below the half-space hull")
            fresh = nxt & ~Y
            Y = nxt
            rounds += 1
        verts = frozenset(self.vertices[i] for i in np.nonzero(Y)[0])
        if self.dimension_exact and rounds > max(self.dimension(), 0):
            raise ConditionError(
                f"hull needed {rounds} rounds in dimension {self.dimension()}",
                witness=frozenset(S),
            )
        return ConvexSubgraph(verts, self, iterations=rounds, checked=True)

    def convex(self, S: Iterable) -> ConvexSubgraph:
        return ConvexSubgraph(frozenset(S), self)

    def gate(self, C: ConvexSubgraph, x):
        """Unique vertex of ``C`` lying between ``x`` and every vertex of ``C``."""
        if C.parent is not self:
            raise StructuralError("convex subgraph belongs to another graph")
        xi = self.index(x)
        idx = np.array(sorted(self.index(c) for c in C.vertices))
        row = self._D[xi, idx]
        g = int(idx[int(np.argmin(row))])
        if not (row == self._D[xi, g] + self._D[g, idx]).all():
            raise ConditionError("gate identity fails", witness=(x, self.vertices[g]))
        return self.vertices[g]

    def crosses(self, h: int, S: Iterable) -> bool:
        col = self.sides[self._mask(S), h]
        return bool(col.any() and (~col).any())

    # -- derived complexes ----------------------------------------------------

    def induced_median(self, S: Iterable) -> MedianGraph:
        """Median graph on a convex vertex set (convex sets are median-closed
        and isometrically embedded, so no re-verification is needed)."""
        S = list(S)
        if not self.is_convex(S):
            raise StructuralError("induced_median needs a convex vertex set")
        return MedianGraph(self.graph.induced(S), exhaustive=self.exhaustive)

    def delete_hyperplanes(self, H: Iterable[int]) -> tuple[MedianGraph, PointMap]:
        """Restriction quotient collapsing the hyperplanes in ``H``.

        Vertices separated only by deleted hyperplanes are identified; each
        class is named by its least-id vertex.
        """
        H = set(H)
        keep = [h for h in range(len(self.hyperplanes)) if h not in H]
        labels = self.sides[:, keep]
        rep: dict[bytes, object] = {}
        q = {}
        for i, v in enumerate(self.vertices):
            key = labels[i].tobytes()
            rep.setdefault(key, v)
            q[v] = rep[key]
        edges = {
            tuple(sorted((q[u], q[v]), key=self.index))
            for h in keep
            for u, v in self.hyperplanes[h].edges
        }
        new = verify_median_graph(GraphSpace(set(q.values()), edges))
        if not new:
            raise ConditionError("quotient is not median", witness=new)
        return new, PointMap(self, new, q, name="collapse")

    def median_closure(self, S: Iterable, cap: int | None = None) -> tuple[frozenset, bool]:
        """Smallest median-closed superset of ``S`` and whether it is 1-connected."""
        D = self._D
        M = self._mask(S)
        if not M.any():
            raise StructuralError("closure of an empty set")
        fresh = M.copy()

        def check_cap(M):
            if cap is not None and M.sum() > cap:
                raise ResourceError(
                    f"median closure exceeded {cap} vertices",
                    partial=frozenset(self.vertices[i] for i in np.nonzero(M)[0]),
                )

        check_cap(M)
        # convex sets are median-closed, which short-circuits large inputs
        while fresh.any() and not (self._halfspace_hull(M) == M).all():
            Mi = np.nonzero(M)[0]
            DM = D[Mi]
            nxt = M.copy()
            for a in np.nonzero(fresh)[0]:
                for b in Mi:
                    meds = np.argmin(DM + (D[a] + D[b])[None, :], axis=1)
                    nxt[meds] = True
            fresh = nxt & ~M
            M = nxt
            check_cap(M)
        verts = frozenset(self.vertices[i] for i in np.nonzero(M)[0])
        return verts, _connected(self.graph, verts)

    def helly_check(self, family: Sequence[ConvexSubgraph]):
        """A vertex common to all members, or ``(i, j)`` indexing a disjoint pair."""
        if not family:
            raise StructuralError("empty family")
        for i, j in itertools.combinations(range(len(family)), 2):
            if not family[i].vertices & family[j].vertices:
                return HellyResult(None, (i, j))
        common = frozenset.intersection(*(C.vertices for C in family))
        if not common:
            raise ConditionError("pairwise-intersecting convex family with empty intersection")
        return HellyResult(min(common, key=self.index), None)


def _connected(g: GraphSpace, verts: frozenset) -> bool:
    if not verts:
        return False
    start = next(iter(verts))
    seen = {start}
    stack = [start]
    while stack:
        v = stack.pop()
        for w in g.neighbours(v):
            if w in verts and w not in seen:
                seen.add(w)
                stack.append(w)
    return len(seen) == len(verts)


class _Budget(Exception):
    pass


def _max_clique(nbrs: list[frozenset], budget: int | None = None) -> int | None:
    """Clique number by branch and bound; None if ``budget`` calls run out."""
    best = 0
    calls = 0

    def grow(size, candidates):
        nonlocal best, calls
        calls += 1
        if budget is not None and calls > budget:
            raise _Budget
        if size + len(candidates) <= best:
            return
        if not candidates:
            best = max(best, size)
            return
        for v in sorted(candidates):
            grow(size + 1, candidates & nbrs[v])
            candidates = candidates - {v}
            if size + len(candidates) <= best:
                return

    try:
        grow(0, frozenset(range(len(nbrs))))
    except _Budget:
        return None
    return best


@dataclass(frozen=True)
class HellyResult:
    common: object
    disjoint_pair: tuple | None

    @property
    def ok(self) -> bool:
        return self.disjoint_pair is None


@dataclass(frozen=True, eq=False)
class ConvexSubgraph:
    vertices: frozenset
    parent: MedianGraph
    iterations: int = 0
    checked: bool = field(default=False, repr=False)

    def __post_init__(self):
        if not self.vertices:
            raise StructuralError("empty convex subgraph")
        if not self.checked and not self.parent.is_convex(self.vertices):
            raise StructuralError("vertex set is not convex")

    def __contains__(self, v):
        return v in self.vertices

    def __len__(self):
        return len(self.vertices)


def halfspace(q: MedianGraph, h: int, positive: bool = True) -> ConvexSubgraph:
    hp = q.hyperplanes[h]
    return ConvexSubgraph(hp.positive if positive else hp.negative, q, checked=True)


# ---------------------------------------------------------------------------
# Products of trees
# ---------------------------------------------------------------------------


class TreeProduct:
    """Lazy l1 product of trees: componentwise distance and median."""

    def __init__(self, trees: Sequence[GraphSpace]):
        for t in trees:
            if not t.is_tree():
                raise StructuralError("box product factors must be trees")
        self.trees = tuple(trees)

    def distance(self, x, y):
        return sum(t.distance(a, b) for t, a, b in zip(self.trees, x, y))

    def median(self, x, y, z):
        return tuple(t.median(a, b, c) for t, a, b, c in zip(self.trees, x, y, z))

    def size(self) -> int:
        return int(np.prod([t.n for t in self.trees], dtype=object))


def box_product(trees: Sequence[GraphSpace], cap: int = 5000, verify: bool = True) -> MedianGraph:
    """Cartesian product of trees as a median graph on coordinate tuples."""
    prod = TreeProduct(trees)
    if prod.size() > cap:
        raise ResourceError(f"product has {prod.size()} vertices, cap is {cap}")
    verts = list(itertools.product(*(t.vertices for t in trees)))
    edges = []
    for i, t in enumerate(trees):
        for u, v, _ in t.edges():
            for rest in itertools.product(*(s.vertices for j, s in enumerate(trees) if j != i)):
                a = rest[:i] + (u,) + rest[i:]
                b = rest[:i] + (v,) + rest[i:]
                edges.append((a, b))
    g = GraphSpace(verts, edges)
    if not verify:
        return MedianGraph(g, exhaustive=False)
    q = verify_median_graph(g)
    if not q:
        raise ConditionError("product of trees failed median verification", witness=q)
    return q
