"""Projection families, perturbed projection distances and the quasitree of
metric spaces built from them.

Members are unit-length graphs indexed ``0..m-1``.  ``projections[(x, y)]``
is the projection of member ``x`` into member ``y`` (a vertex set of ``y``).
Points of the family are pairs ``(member, vertex)``.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import ConditionError, ParameterError, ResourceError, StructuralError
from .instances import path_graph
from .metric import GraphSpace

UNDEFINED = -1


@dataclass(eq=False)
class ProjectionFamily:
    members: tuple
    projections: dict
    xi: int | None = None
    expected_xi: int | None = None
    name: str = "family"

    def __post_init__(self):
        self.members = tuple(self.members)
        m = len(self.members)
        for g in self.members:
            if not g.unit_lengths:
                raise StructuralError("family members must have unit edge lengths")
        for x, y in itertools.permutations(range(m), 2):
            s = self.projections.get((x, y))
            if not s:
                raise StructuralError(f"empty or missing projection of member {x} into {y}")
            missing = [v for v in s if v not in self.members[y].vertices]
            if missing:
                raise StructuralError(f"projection of {x} into {y} leaves the target: {missing[:3]}")
        self.projections = {k: frozenset(v) for k, v in self.projections.items()}

    @property
    def m(self) -> int:
        return len(self.members)

    def _idx(self, y, pts) -> list[int]:
        g = self.members[y]
        return [g.index(p) for p in pts]

    def flat(self, y: int, point) -> frozenset:
        """Point projection: the point itself in its own member, else its member's projection."""
        i, v = point
        if v not in self.members[i].vertices:
            raise StructuralError(f"{point} is not a vertex of member {i}")
        return frozenset([v]) if i == y else self.projections[(i, y)]

    def diam_in(self, y: int, *sets) -> int:
        idx = sorted({j for s in sets for j in self._idx(y, s)})
        return int(self.members[y].D[np.ix_(idx, idx)].max())

    def point_distance(self, y: int, p, q) -> int:
        """``d_Y(p, q)`` for family points, through their projections to ``Y``."""
        return self.diam_in(y, self.flat(y, p), self.flat(y, q))

    def table(self) -> np.ndarray:
        """``T[y, x, z] = diam(pi_y(x) u pi_y(z))``; ``UNDEFINED`` when ``y`` is ``x`` or ``z``."""
        m = self.m
        T = np.full((m, m, m), UNDEFINED, dtype=np.int64)
        for y in range(m):
            D = self.members[y].D
            others = [x for x in range(m) if x != y]
            idx = {x: self._idx(y, self.projections[(x, y)]) for x in others}
            for a, b in itertools.combinations_with_replacement(others, 2):
                val = int(D[np.ix_(idx[a] + idx[b], idx[a] + idx[b])].max())
                T[y, a, b] = T[y, b, a] = val
        return T

    def points(self) -> list:
        return [(i, v) for i, g in enumerate(self.members) for v in g.vertices]


def projection_diameters(fam: ProjectionFamily) -> dict:
    return {(x, y): fam.diam_in(y, s) for (x, y), s in fam.projections.items()}


def verify_projection_axioms(fam: ProjectionFamily, cap: int | None = None) -> int:
    """Smallest realized value ``xi`` for which (P0) and (P1) both hold.

    (P1) fails for a triple exactly when ``xi`` is below
    ``min(d_Z(X, Y), d_X(Y, Z))``, so the answer is the largest such minimum
    or the largest projection diameter, whichever is bigger.  (P2) is vacuous
    for finite families.
    """
    diam = projection_diameters(fam)
    best, witness = max(((v, ("P0",) + k) for k, v in diam.items()), default=(0, None))
    T = fam.table()
    for x, y, z in itertools.permutations(range(fam.m), 3):
        v = min(T[z, x, y], T[x, y, z])
        if v > best:
            best, witness = int(v), ("P1", x, y, z)
    if cap is not None and best > cap:
        raise ConditionError(f"axioms need xi = {best} > cap {cap}", witness=witness)
    fam.xi = best
    return best


def axioms_hold(fam: ProjectionFamily, xi) -> list:
    """Independent triple-by-triple check; returns violations."""
    bad = [("P0", k) for k, v in projection_diameters(fam).items() if v > xi]
    for x, y, z in itertools.permutations(range(fam.m), 3):
        if fam.diam_in(z, fam.projections[(x, z)], fam.projections[(y, z)]) > xi and \
                fam.diam_in(x, fam.projections[(y, x)], fam.projections[(z, x)]) > xi:
            bad.append(("P1", (x, y, z)))
    return bad


@dataclass(eq=False)
class PerturbedDistances:
    family: ProjectionFamily
    table: np.ndarray
    delta: int
    scheme: str

    def __call__(self, y, x, z) -> int:
        return int(self.table[y, x, z])


def perturb_distances(fam: ProjectionFamily, scheme: str = "identity", delta: int = 0) -> PerturbedDistances:
    """``identity`` keeps the table; ``floor`` subtracts ``delta`` and clips at zero."""
    if delta < 0:
        raise ParameterError("delta must be non-negative")
    if int(delta) != delta:
        raise ParameterError("delta must be an integer")
    delta = int(delta)
    base = fam.table()
    if scheme == "identity":
        table, delta = base.copy(), 0
    elif scheme == "floor":
        table = np.where(base == UNDEFINED, UNDEFINED, np.maximum(0, base - delta))
    else:
        raise ParameterError(f"unknown perturbation scheme {scheme!r}")
    ok = base == UNDEFINED
    ok |= (base - delta <= table) & (table <= base)
    if not ok.all():
        where = tuple(int(i) for i in np.argwhere(~ok)[0])
        raise ConditionError("perturbed table leaves the allowed band", witness=where)
    table.setflags(write=False)
    return PerturbedDistances(fam, table, delta, scheme)


@dataclass(eq=False)
class QuasiTree:
    family: ProjectionFamily
    K: Fraction
    L: Fraction
    vertices: tuple
    edges: list
    pair_edges: dict
    connected: bool
    graph: GraphSpace | None
    perturbed: PerturbedDistances

    def member_of(self, v) -> int:
        return v[0]

    def joined(self, x: int, y: int) -> bool:
        return self.pair_edges.get((min(x, y), max(x, y)), 0) > 0

    def distance(self, p, q):
        if self.graph is None:
            raise StructuralError("quasitree is disconnected")
        return self.graph.distance(p, q)


def build_qtms(fam: ProjectionFamily, dflat: PerturbedDistances, K, L=1) -> QuasiTree:
    """Disjoint union of members plus length-``L`` edges between joined pairs.

    Members ``X`` and ``Y`` are joined when ``d_Z(X, Y) <= K`` (perturbed) for
    every other member ``Z``; the edges run from each point of ``pi_Y(X)`` to
    each point of ``pi_X(Y)``.
    """
    K, L = Fraction(K), Fraction(L)
    if L < 1:
        raise ParameterError("L must be at least 1")
    if dflat.family is not fam:
        raise StructuralError("perturbed table belongs to another family")
    verts = fam.points()
    edges = [((i, u), (i, v), 1) for i, g in enumerate(fam.members) for u, v, _ in g.edges()]
    pair_edges = {}
    for x, y in itertools.combinations(range(fam.m), 2):
        if all(dflat.table[z, x, y] <= K for z in range(fam.m) if z not in (x, y)):
            new = [
                ((y, p), (x, q), L)
                for p in sorted(fam.projections[(x, y)], key=fam.members[y].index)
                for q in sorted(fam.projections[(y, x)], key=fam.members[x].index)
            ]
            edges.extend(new)
            pair_edges[(x, y)] = len(new)
        else:
            pair_edges[(x, y)] = 0
    pos = {v: i for i, v in enumerate(verts)}
    rows = [pos[a] for a, b, _ in edges]
    cols = [pos[b] for a, b, _ in edges]
    adj = coo_matrix((np.ones(len(edges)), (rows, cols)), shape=(len(verts), len(verts)))
    ncomp = connected_components(adj, directed=False)[0] if verts else 0
    connected = ncomp <= 1
    graph = GraphSpace(verts, edges) if connected else None
    return QuasiTree(fam, K, L, tuple(verts), edges, pair_edges, connected, graph, dflat)


# ---------------------------------------------------------------------------
# Distance formula and relevant sets
# ---------------------------------------------------------------------------


def truncate(a, b):
    return a if a >= b else 0


@dataclass(frozen=True)
class FormulaRow:
    K: Fraction
    pair: tuple
    distance: Fraction
    sum_K: int
    sum_Kp: int
    upper: bool
    lower: bool
    implication: bool
    witness: int | None
    order_total: bool | None = None


@dataclass
class FormulaReport:
    K: Fraction
    Kp: Fraction
    rows: list = field(default_factory=list)

    @property
    def upper(self) -> bool:
        return all(r.upper for r in self.rows)

    @property
    def lower(self) -> bool:
        return all(r.lower for r in self.rows)

    @property
    def implication(self) -> bool:
        return all(r.implication for r in self.rows)

    @property
    def order_total(self) -> bool:
        return all(r.order_total is not False for r in self.rows)

    @property
    def passed(self) -> bool:
        return self.upper and self.implication and self.order_total


def sample_pairs(points, limit: int, seed: int) -> list:
    pairs = list(itertools.combinations(points, 2))
    if len(pairs) <= limit:
        return pairs
    return random.Random(seed).sample(pairs, limit)


def distance_formula_check(qt: QuasiTree, Kp, pairs, relevance=None) -> FormulaReport:
    """Upper bound, lower bound and the large-distance implication per pair.

    Failures are recorded, not raised.  When ``relevance`` is given, the
    relevant set at that threshold is also ordered and checked for totality.
    """
    Kp = Fraction(Kp)
    if Kp <= qt.K:
        raise ParameterError("K' must exceed K")
    fam = qt.family
    rep = FormulaReport(qt.K, Kp)
    for p, q in pairs:
        for v in (p, q):
            if not (0 <= v[0] < fam.m and v[1] in fam.members[v[0]]):
                raise StructuralError(f"{v} is not a family point")
        d = qt.distance(p, q)
        per = [fam.point_distance(z, p, q) for z in range(fam.m)]
        sK = sum(truncate(a, qt.K) for a in per)
        sKp = sum(truncate(a, Kp) for a in per)
        witness = next((z for z, a in enumerate(per) if a >= qt.K), None)
        total = None
        if relevance is not None:
            total = not relevant_set(fam, p, q, relevance).violations
        rep.rows.append(FormulaRow(
            qt.K, (p, q), d, sK, sKp,
            upper=d <= 6 * qt.K + 4 * sK,
            lower=d >= Fraction(sKp, 2),
            implication=not (d > 6 * qt.K) or witness is not None,
            witness=witness,
            order_total=total,
        ))
    return rep


@dataclass
class RelevantSet:
    members: list
    violations: list
    theta: Fraction


def default_theta(xi) -> Fraction:
    return Fraction(max(4, 4 * xi))


def relevant_set(fam: ProjectionFamily, x, y, t, theta=None) -> RelevantSet:
    """Members where ``x`` and ``y`` project far apart, in the induced order.

    ``U < V`` when ``d_V(x, pi_V(U)) <= theta``.  Antisymmetry, totality and
    transitivity on the returned set are checked; violations are listed.
    """
    xi = fam.xi if fam.xi is not None else verify_projection_axioms(fam)
    theta = default_theta(xi) if theta is None else Fraction(theta)
    chosen = [w for w in range(fam.m) if fam.point_distance(w, x, y) >= t]

    def less(u, v):
        return fam.diam_in(v, fam.flat(v, x), fam.projections[(u, v)]) <= theta

    rel = {(u, v): less(u, v) for u, v in itertools.permutations(chosen, 2)}
    bad = []
    for u, v in itertools.combinations(chosen, 2):
        if rel[(u, v)] and rel[(v, u)]:
            bad.append(("antisymmetry", u, v))
        elif not (rel[(u, v)] or rel[(v, u)]):
            bad.append(("totality", u, v))
    for u, v, w in itertools.permutations(chosen, 3):
        if rel[(u, v)] and rel[(v, w)] and not rel[(u, w)]:
            bad.append(("transitivity", u, v, w))
    rank = {u: sum(rel[(v, u)] for v in chosen if v != u) for u in chosen}
    return RelevantSet(sorted(chosen, key=lambda u: (rank[u], u)), bad, theta)


@dataclass
class SweepResult:
    reports: list
    threshold: Fraction | None

    def rows(self) -> list:
        return [r for rep in self.reports for r in rep.rows]


def sweep(fam: ProjectionFamily, dflat: PerturbedDistances, Ks, L=1, pairs=None,
          kp_offset=1, seed: int = 0, pair_limit: int = 2000, check_order: bool = True) -> SweepResult:
    """Distance-formula reports over ``Ks``; the threshold is the least ``K``
    from which every larger swept ``K`` passes all checked clauses.

    The relevance threshold used for the order check is ``max(K, 20 xi, 1)``.
    """
    Ks = sorted(Fraction(k) for k in Ks)
    xi = fam.xi if fam.xi is not None else verify_projection_axioms(fam)
    if pairs is None:
        pairs = sample_pairs(fam.points(), pair_limit, seed)
    reports = []
    for K in Ks:
        qt = build_qtms(fam, dflat, K, L)
        if not qt.connected:
            reports.append(FormulaReport(K, K + kp_offset, rows=[]))
            reports[-1].rows = None
            continue
        t = max(K, 20 * xi, 1) if check_order else None
        reports.append(distance_formula_check(qt, K + kp_offset, pairs, relevance=t))
    threshold = None
    for rep in reversed(reports):
        if rep.rows is None or not rep.passed:
            break
        threshold = rep.K
    return SweepResult(reports, threshold)


# ---------------------------------------------------------------------------
# Instance generators
# ---------------------------------------------------------------------------


def nearest_point_family(ambient: GraphSpace, lines, name: str, expected_xi=None,
                         cap: int = 5000) -> ProjectionFamily:
    """Members are the induced subgraphs on ``lines``; ``pi_Y(X)`` is the set of
    points of ``Y`` nearest to ``X`` in the ambient graph."""
    if ambient.n > cap:
        raise ResourceError(f"ambient graph has {ambient.n} vertices, cap {cap}")
    members = [ambient.induced(line) for line in lines]
    D = ambient.D
    idx = [[ambient.index(v) for v in line] for line in lines]
    proj = {}
    for x, y in itertools.permutations(range(len(lines)), 2):
        to_x = D[np.ix_(idx[y], idx[x])].min(axis=1)
        proj[(x, y)] = frozenset(v for v, d in zip(lines[y], to_x) if d == to_x.min())
    return ProjectionFamily(members, proj, expected_xi=expected_xi, name=name)


def tripod_lines(leg_length: int) -> ProjectionFamily:
    """The three legs of a tripod, each including the centre ``0``."""
    if leg_length < 1:
        raise ParameterError("leg_length must be positive")
    verts = [0] + [(a, i) for a in range(3) for i in range(1, leg_length + 1)]
    edges = [(0, (a, 1)) for a in range(3)]
    edges += [((a, i), (a, i + 1)) for a in range(3) for i in range(1, leg_length)]
    g = GraphSpace(verts, edges)
    legs = [[0] + [(a, i) for i in range(1, leg_length + 1)] for a in range(3)]
    return nearest_point_family(g, legs, f"tripod_lines({leg_length})", expected_xi=0)


def grid_lines(n: int, spacing: int) -> ProjectionFamily:
    """``n`` columns of ``n`` vertices in a grid, ``spacing`` apart, joined
    alternately along the top and bottom rows into one snake.

    Projections between columns are single endpoints, so ``xi = 0``, and a
    column between two others sees them at opposite ends.
    """
    if n < 2 or spacing < 1:
        raise ParameterError("need n >= 2 and spacing >= 1")
    cols = [[(c * spacing, h) for h in range(n)] for c in range(n)]
    edges = [(col[h], col[h + 1]) for col in cols for h in range(n - 1)]
    for c in range(n - 1):
        row = n - 1 if c % 2 == 0 else 0
        edges += [((c * spacing + s, row), (c * spacing + s + 1, row)) for s in range(spacing)]
    verts = sorted({v for e in edges for v in e} | {v for col in cols for v in col})
    g = GraphSpace(verts, edges)
    return nearest_point_family(g, cols, f"grid_lines({n},{spacing})", expected_xi=0)


def tree_axes(tree: GraphSpace, line_count: int, seed: int, min_length: int = 2) -> ProjectionFamily:
    """Geodesics between seeded random leaf pairs of a tree.

    The expected constant recorded is twice the largest number of edges
    shared by two of the chosen geodesics.
    """
    if not tree.is_tree():
        raise StructuralError("tree_axes needs a tree")
    leaves = [v for v in tree.vertices if len(tree.neighbours(v)) == 1]
    pairs = [(a, b) for a, b in itertools.combinations(leaves, 2) if tree.distance(a, b) >= min_length]
    if len(pairs) < line_count:
        raise ParameterError(f"tree has only {len(pairs)} leaf pairs of length >= {min_length}")
    chosen = random.Random(seed).sample(pairs, line_count)
    lines = [tree.geodesic(a, b) for a, b in chosen]
    overlap = max(
        (max(len(set(a) & set(b)) - 1, 0) for a, b in itertools.combinations(lines, 2)),
        default=0,
    )
    return nearest_point_family(tree, lines, f"tree_axes({line_count},{seed})", expected_xi=2 * overlap)


def two_lines(length: int = 3) -> ProjectionFamily:
    """Two disjoint paths with the given endpoint projections."""
    a = path_graph(length)
    b = path_graph(length, offset=length + 1)
    return ProjectionFamily([a, b], {(0, 1): {b.vertices[0]}, (1, 0): {a.vertices[-1]}},
                            expected_xi=0, name="two_lines")
