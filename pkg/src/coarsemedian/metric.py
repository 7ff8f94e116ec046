"""Finite metric spaces, graph metrics and the coarse-geometry measurement kit.

Distances are exact wherever possible.  Rational inputs are stored as
``Fraction`` and, for vectorised work, converted to an integer matrix times a
common unit (``1 / lcm(denominators)``), so every comparison is integer
comparison.  Float inputs are accepted but flagged inexact and compared with
``INEXACT_TOL``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property, lru_cache
from typing import Any, Callable, Hashable, Iterable, Mapping, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, shortest_path

from .errors import StructuralError

INEXACT_TOL = 1e-9


def as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    if isinstance(x, str):
        return Fraction(x.strip())
    raise TypeError(f"not an exact number: {x!r}")


def _is_exact(x) -> bool:
    return isinstance(x, (Fraction, int, np.integer, str)) and not isinstance(x, bool)


def scale_to_int(values: Iterable[Fraction]) -> tuple[int, Fraction]:
    """Return ``(L, unit)`` with every value an integer multiple of ``unit = 1/L``."""
    den = 1
    for v in values:
        den = math.lcm(den, v.denominator)
    return den, Fraction(1, den)


def _int_array(rows: Sequence[Sequence[int]]) -> np.ndarray:
    big = max((abs(v) for row in rows for v in row), default=0)
    dtype = np.int64 if big < 2**62 else object
    return np.array(rows, dtype=dtype).reshape(len(rows), len(rows[0]) if rows else 0)


def _sorted_ids(ids: Iterable[Hashable]) -> list:
    ids = list(ids)
    try:
        return sorted(ids)
    except TypeError:
        return ids


# ---------------------------------------------------------------------------
# Finite metric spaces
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FiniteMetricSpace:
    points: tuple
    dist: tuple
    exact: bool = True
    scale: Fraction = Fraction(1)

    def __post_init__(self):
        n = len(self.points)
        if len(self.dist) != n or any(len(row) != n for row in self.dist):
            raise StructuralError(
                f"distance matrix shape does not match {n} points"
            )
        if len(set(self.points)) != n:
            raise StructuralError("duplicate point ids")

    @classmethod
    def from_matrix(cls, points, matrix, exact=None, scale=Fraction(1)):
        points = tuple(points)
        rows = [list(row) for row in matrix]
        if exact is None:
            exact = all(_is_exact(v) for row in rows for v in row)
        if exact:
            rows = [tuple(as_fraction(v) for v in row) for row in rows]
        else:
            rows = [tuple(float(v) for v in row) for row in rows]
        return cls(points, tuple(rows), exact, as_fraction(scale))

    @classmethod
    def from_coords(cls, coords: Mapping[Hashable, Sequence], norm="l1"):
        """Metric on labelled coordinate tuples under the l1 or l-infinity norm."""
        pts = list(coords)
        vecs = [tuple(as_fraction(c) for c in coords[p]) for p in pts]
        agg = sum if norm == "l1" else max
        if norm not in ("l1", "linf"):
            raise ValueError(f"unknown norm {norm!r}")
        rows = [
            [agg(abs(a - b) for a, b in zip(u, v)) if u != v else Fraction(0) for v in vecs]
            for u in vecs
        ]
        return cls.from_matrix(pts, rows, exact=True)

    @property
    def n(self) -> int:
        return len(self.points)

    @cached_property
    def _index(self) -> dict:
        return {p: i for i, p in enumerate(self.points)}

    def index(self, p) -> int:
        try:
            return self._index[p]
        except KeyError:
            raise StructuralError(f"unknown point {p!r}") from None

    def distance(self, p, q):
        return self.dist[self.index(p)][self.index(q)]

    dist_between = distance

    def diameter(self):
        if self.n == 0:
            return Fraction(0)
        return max(max(row) for row in self.dist)

    @cached_property
    def int_matrix(self) -> tuple[np.ndarray, Fraction]:
        """Integer matrix ``M`` and unit ``u`` with ``dist = M * u`` (exact spaces)."""
        if not self.exact:
            raise StructuralError("inexact space has no integer representation")
        den, unit = scale_to_int(v for row in self.dist for v in row)
        rows = [[int(v * den) for v in row] for row in self.dist]
        return _int_array(rows) if rows else np.zeros((0, 0), dtype=np.int64), unit

    def ball(self, centre, radius, closed=False) -> frozenset:
        """Realized ball around a point, as a set of point ids."""
        row = self.dist[self.index(centre)]
        if closed:
            return frozenset(p for p, d in zip(self.points, row) if d <= radius)
        return frozenset(p for p, d in zip(self.points, row) if d < radius)

    def neighbourhood(self, subset: Iterable, radius) -> frozenset:
        """Open ``radius``-neighbourhood of a point subset."""
        idx = [self.index(p) for p in subset]
        return frozenset(
            p for j, p in enumerate(self.points) if any(self.dist[i][j] < radius for i in idx)
        )

    def subset_diameter(self, subset: Iterable):
        idx = [self.index(p) for p in subset]
        if len(idx) < 2:
            return Fraction(0)
        return max(self.dist[i][j] for i in idx for j in idx)

    def scaled(self, factor) -> FiniteMetricSpace:
        factor = as_fraction(factor) if self.exact else factor
        rows = tuple(tuple(v * factor for v in row) for row in self.dist)
        return FiniteMetricSpace(self.points, rows, self.exact, self.scale * as_fraction(factor))

    def restrict(self, subset: Sequence) -> FiniteMetricSpace:
        idx = [self.index(p) for p in subset]
        rows = tuple(tuple(self.dist[i][j] for j in idx) for i in idx)
        return FiniteMetricSpace(tuple(subset), rows, self.exact, self.scale)


@dataclass(frozen=True)
class Violation:
    kind: str  # "symmetry" | "diagonal" | "positivity" | "triangle"
    where: tuple

    def __str__(self):
        return f"{self.kind} at {self.where}"


def check_metric(m: FiniteMetricSpace) -> list[Violation]:
    """Every violated symmetry, diagonal, positivity and triangle constraint.

    Indices in the returned violations are matrix positions.  An empty list
    means ``m`` is a metric.  Triangle violations ``(i, j, k)`` mean
    ``d(i, k) > d(i, j) + d(j, k)``.
    """
    n = m.n
    if n == 0:
        return []
    if m.exact:
        M, _ = m.int_matrix
        tol = 0
    else:
        M = np.array(m.dist, dtype=float)
        tol = INEXACT_TOL
    out: list[Violation] = []
    for i in range(n):
        if abs(M[i, i]) > tol:
            out.append(Violation("diagonal", (i,)))
    for i, j in zip(*np.nonzero(np.abs(M - M.T) > tol)):
        if i < j:
            out.append(Violation("symmetry", (int(i), int(j))))
    off = ~np.eye(n, dtype=bool)
    for i, j in zip(*np.nonzero((M <= tol) & off)):
        out.append(Violation("positivity", (int(i), int(j))))
    for j in range(n):
        via = M[:, j][:, None] + M[j][None, :]
        bad = M > via + tol
        for i, k in zip(*np.nonzero(bad)):
            out.append(Violation("triangle", (int(i), j, int(k))))
    return out


# ---------------------------------------------------------------------------
# Graph metrics
# ---------------------------------------------------------------------------


class GraphSpace:
    """Connected graph with positive edge lengths and its shortest-path metric.

    Vertex ids are kept sorted when they are mutually comparable; this order
    is the "least id" order used by every tie-break in the package.
    """

    def __init__(self, vertices: Iterable[Hashable], edges: Iterable[Sequence]):
        self.vertices: tuple = tuple(_sorted_ids(dict.fromkeys(vertices)))
        self._index = {v: i for i, v in enumerate(self.vertices)}
        lengths: dict[tuple[int, int], Fraction] = {}
        for e in edges:
            u, v = e[0], e[1]
            w = as_fraction(e[2]) if len(e) > 2 else Fraction(1)
            if u not in self._index or v not in self._index:
                raise StructuralError(f"edge ({u!r}, {v!r}) uses an unknown vertex")
            if u == v:
                raise StructuralError(f"self-loop at {u!r}")
            if w <= 0:
                raise StructuralError(f"edge ({u!r}, {v!r}) has non-positive length {w}")
            a, b = sorted((self._index[u], self._index[v]))
            lengths[(a, b)] = min(w, lengths.get((a, b), w))
        self._lengths = lengths
        den, self.unit = scale_to_int(lengths.values())
        self._w = {k: int(w * den) for k, w in lengths.items()}
        n = len(self.vertices)
        if n == 0:
            raise StructuralError("empty graph")
        adj: list[list[tuple[int, int]]] = [[] for _ in range(n)]
        for (a, b), w in self._w.items():
            adj[a].append((b, w))
            adj[b].append((a, w))
        for row in adj:
            row.sort()
        self._adj = adj
        self._D = self._all_pairs()

    # -- construction helpers -------------------------------------------------

    def _csgraph(self) -> csr_matrix:
        n = len(self.vertices)
        if not self._w:
            return csr_matrix((n, n))
        a, b = zip(*self._w.keys())
        w = list(self._w.values())
        return csr_matrix((w + w, (list(a) + list(b), list(b) + list(a))), shape=(n, n))

    def _all_pairs(self) -> np.ndarray:
        n = len(self.vertices)
        g = self._csgraph()
        ncomp, _ = connected_components(g, directed=False)
        if ncomp != 1:
            raise StructuralError(f"graph is disconnected ({ncomp} components)")
        unweighted = all(w == 1 for w in self._w.values())
        D = shortest_path(g, method="D", directed=False, unweighted=unweighted)
        if n and D.max() >= 2**52:
            raise StructuralError("edge lengths too heterogeneous for exact distances")
        Di = np.rint(D).astype(np.int64)
        if Di.max() < 2**31:
            Di = Di.astype(np.int32)
        Di.setflags(write=False)
        return Di

    @classmethod
    def from_metric(cls, m: FiniteMetricSpace) -> GraphSpace:
        """Complete graph realizing a finite metric (each pair joined at its distance)."""
        edges = [
            (m.points[i], m.points[j], m.dist[i][j])
            for i in range(m.n)
            for j in range(i + 1, m.n)
        ]
        return cls(m.points, edges)

    # -- basic queries --------------------------------------------------------

    @property
    def n(self) -> int:
        return len(self.vertices)

    @property
    def D(self) -> np.ndarray:
        """Scaled integer distance matrix; true distance = ``D * unit``."""
        return self._D

    @property
    def unit_lengths(self) -> bool:
        return self.unit == 1 and all(w == 1 for w in self._w.values())

    def index(self, v) -> int:
        try:
            return self._index[v]
        except KeyError:
            raise StructuralError(f"unknown vertex {v!r}") from None

    def __contains__(self, v) -> bool:
        return v in self._index

    def _value(self, raw):
        raw = int(raw)
        return raw if self.unit == 1 else raw * self.unit

    def distance(self, u, v):
        return self._value(self._D[self.index(u), self.index(v)])

    def edges(self) -> list[tuple]:
        return [
            (self.vertices[a], self.vertices[b], self._lengths[(a, b)])
            for (a, b) in sorted(self._lengths)
        ]

    def neighbours(self, v) -> list:
        return [self.vertices[j] for j, _ in self._adj[self.index(v)]]

    def is_adjacent(self, u, v) -> bool:
        a, b = sorted((self.index(u), self.index(v)))
        return (a, b) in self._lengths

    def edge_length(self, u, v):
        a, b = sorted((self.index(u), self.index(v)))
        return self._lengths[(a, b)]

    def degree(self, v) -> int:
        return len(self._adj[self.index(v)])

    def diameter(self):
        return self._value(self._D.max())

    def to_metric(self) -> FiniteMetricSpace:
        rows = [[self._value(x) for x in row] for row in self._D.tolist()]
        return FiniteMetricSpace.from_matrix(self.vertices, rows, exact=True)

    def induced(self, subset: Iterable) -> GraphSpace:
        keep = set(subset)
        return GraphSpace(
            keep, [(u, v, w) for u, v, w in self.edges() if u in keep and v in keep]
        )

    def is_tree(self) -> bool:
        return len(self._w) == self.n - 1

    # -- geodesics and medians ------------------------------------------------

    def geodesic(self, x, y) -> list:
        """Shortest path from ``x`` to ``y``; each step back from ``y`` takes the
        least-id predecessor."""
        xi, yi = self.index(x), self.index(y)
        row = self._D[xi]
        path = [yi]
        v = yi
        while v != xi:
            for w, ln in self._adj[v]:
                if row[w] + ln == row[v]:
                    v = w
                    break
            path.append(v)
        return [self.vertices[i] for i in reversed(path)]

    @lru_cache(maxsize=65536)
    def _canonical_geodesic_idx(self, a: int, b: int) -> tuple:
        if a > b:
            a, b = b, a
        return tuple(self.index(v) for v in self.geodesic(self.vertices[a], self.vertices[b]))

    def distance_to_set(self, idx: Sequence[int]) -> np.ndarray:
        return self._D[list(idx)].min(axis=0)

    def coarse_median(self, x, y, z):
        """Vertex minimizing the summed distance to three fixed geodesics."""
        a, b, c = self.index(x), self.index(y), self.index(z)
        total = (
            self.distance_to_set(self._canonical_geodesic_idx(a, b)).astype(np.int64)
            + self.distance_to_set(self._canonical_geodesic_idx(b, c))
            + self.distance_to_set(self._canonical_geodesic_idx(a, c))
        )
        return self.vertices[int(np.argmin(total))]

    median = coarse_median

    def __repr__(self):
        return f"GraphSpace(n={self.n}, edges={len(self._w)})"


def geodesic(g: GraphSpace, x, y) -> list:
    return g.geodesic(x, y)


def coarse_median(g: GraphSpace, x, y, z):
    return g.coarse_median(x, y, z)


def _matrix_and_unit(m) -> tuple[np.ndarray, Fraction | None]:
    if isinstance(m, GraphSpace):
        return m.D, m.unit
    if hasattr(m, "graph") and isinstance(m.graph, GraphSpace):
        return m.graph.D, m.graph.unit
    if m.exact:
        return m.int_matrix
    return np.array(m.dist, dtype=float), None


def four_point_delta(m) -> Fraction | float:
    """Exact four-point hyperbolicity constant.

    Maximum over quadruples of (largest - second largest)/2 of the three
    pair-sums ``d(a,b)+d(c,d)``, ``d(a,c)+d(b,d)``, ``d(a,d)+d(b,c)``.
    """
    M, unit = _matrix_and_unit(m)
    n = M.shape[0]
    if n < 4:
        return Fraction(0) if unit is not None else 0.0
    M = M.astype(np.int64) if unit is not None else M
    best = 0
    for a in range(n):
        Ma = M[a]
        for b in range(a + 1, n):
            s1 = M[a, b] + M
            s2 = Ma[:, None] + M[b][None, :]
            s3 = s2.T
            hi = np.maximum(np.maximum(s1, s2), s3)
            lo = np.minimum(np.minimum(s1, s2), s3)
            mid = s1 + s2 + s3 - hi - lo
            best = max(best, (hi - mid).max())
    if unit is None:
        return float(best) / 2
    return Fraction(int(best)) * unit / 2


def hausdorff(space, A: Iterable, B: Iterable):
    """Exact Hausdorff distance between two vertex sets of a graph-like space."""
    A, B = list(A), list(B)
    if not A or not B:
        raise StructuralError("Hausdorff distance of an empty set")
    g = space.graph if hasattr(space, "graph") else space
    ia = [g.index(v) for v in A]
    ib = [g.index(v) for v in B]
    sub = g.D[np.ix_(ia, ib)]
    return g._value(max(sub.min(axis=1).max(), sub.min(axis=0).max()))


def unparam_qg_defect(g: GraphSpace, path: Sequence) -> tuple:
    """``(hausdorff to the endpoint geodesic, worst backtracking of progress)``.

    Progress of position ``t`` is ``d(path[0], path[t])``; backtracking is the
    largest drop ``progress(i) - progress(j)`` over ``i < j``.
    """
    if not path:
        raise StructuralError("empty path")
    idx = [g.index(v) for v in path]
    haus = hausdorff(g, path, g.geodesic(path[0], path[-1]))
    progress = g.D[idx[0], idx].astype(np.int64)
    running = np.maximum.accumulate(progress)
    back = int((running - progress).max())
    return haus, g._value(back)


# ---------------------------------------------------------------------------
# Maps and their distortion
# ---------------------------------------------------------------------------


@dataclass
class PointMap:
    """A map between finite spaces, evaluated pointwise.

    ``source`` and ``target`` are space handles exposing ``distance`` (and
    ``median`` where median defects are measured).
    """

    source: Any
    target: Any
    assignment: Mapping
    name: str = ""
    pair_cache: dict = field(default_factory=dict, repr=False)

    def __call__(self, x):
        return self.assignment[x]

    def domain(self) -> list:
        return list(self.assignment)

    def image(self) -> list:
        return list(dict.fromkeys(self.assignment.values()))

    def compose(self, inner: PointMap) -> PointMap:
        """``self ∘ inner``."""
        return PointMap(
            inner.source,
            self.target,
            {x: self.assignment[y] for x, y in inner.assignment.items()},
            name=f"{self.name}∘{inner.name}",
        )

    def distances(self, x, y) -> tuple:
        key = (x, y)
        if key not in self.pair_cache:
            self.pair_cache[key] = (
                self.source.distance(x, y),
                self.target.distance(self(x), self(y)),
            )
        return self.pair_cache[key]


@dataclass(frozen=True)
class DistortionGrid:
    lam_step: Fraction = Fraction(1, 4)
    lam_cap: Fraction = Fraction(16)
    eps_step: Fraction = Fraction(1, 2)
    eps_cap: Fraction = Fraction(256)


@dataclass(frozen=True)
class QIReport:
    lam: Fraction
    eps: Fraction
    coarse_onto_radius: Any = None
    sample_size: int = 0
    feasible: bool = True

    def holds(self, d, e) -> bool:
        return d / self.lam - self.eps <= e <= self.lam * d + self.eps


def _ceil_to(x: Fraction, step: Fraction) -> Fraction:
    return math.ceil(x / step) * step


def distortion(f: PointMap, pairs: Iterable[tuple], grid: DistortionGrid = DistortionGrid(),
               onto_candidates: Iterable | None = None) -> QIReport:
    """Lexicographically least ``(lambda, eps)`` on the grid valid on ``pairs``.

    ``lambda`` runs over ``1, 1 + lam_step, ...`` up to ``lam_cap``; for each
    the least admissible ``eps`` on its grid is taken.  When no grid point
    works the report is returned with ``feasible=False`` at the cap.
    """
    data = []
    for x, y in pairs:
        d, e = f.distances(x, y)
        data.append((as_fraction(d), as_fraction(e)))
    if not data:
        raise StructuralError("empty sample")
    onto = None
    if onto_candidates is not None:
        img = f.image()
        onto = max(min(f.target.distance(t, i) for i in img) for t in onto_candidates)
    lam = Fraction(1)
    need = None
    while lam <= grid.lam_cap:
        need = max(max(e - lam * d, d / lam - e) for d, e in data)
        need = _ceil_to(max(need, Fraction(0)), grid.eps_step)
        if need <= grid.eps_cap:
            return QIReport(lam, need, onto, len(data))
        lam += grid.lam_step
    return QIReport(grid.lam_cap, need, onto, len(data), feasible=False)


def distortion_front(f: PointMap, pairs: Iterable[tuple],
                     grid: DistortionGrid = DistortionGrid()) -> list[tuple]:
    """Grid points ``(lambda, eps)`` where the least admissible ``eps`` drops.

    The lexicographic report of :func:`distortion` is the first entry; the
    rest show how much additive slack a larger ``lambda`` buys.
    """
    data = [tuple(as_fraction(v) for v in f.distances(x, y)) for x, y in pairs]
    if not data:
        raise StructuralError("empty sample")
    front = []
    lam = Fraction(1)
    while lam <= grid.lam_cap:
        need = _ceil_to(max(max(max(e - lam * d, d / lam - e) for d, e in data), Fraction(0)), grid.eps_step)
        if need <= grid.eps_cap and (not front or need < front[-1][1]):
            front.append((lam, need))
        lam += grid.lam_step
    return front


def quasimedian_defect(f: PointMap, triples: Iterable[tuple]):
    """Max of ``d(f(mu(a,b,c)), mu(f a, f b, f c))`` over the triples."""
    S, T = f.source, f.target
    worst = 0
    for a, b, c in triples:
        lhs = f(S.median(a, b, c))
        rhs = T.median(f(a), f(b), f(c))
        worst = max(worst, T.distance(lhs, rhs))
    return worst


def pinned_quasimedian_defect(f: PointMap, x0, pairs: Iterable[tuple]):
    """Max of ``d(f(mu(a,b,x0)), mu(f a, f b, f x0))`` over the pairs."""
    return quasimedian_defect(f, ((a, b, x0) for a, b in pairs))


def all_pairs(points: Sequence) -> list[tuple]:
    return list(itertools.combinations(points, 2))


def all_triples(points: Sequence) -> list[tuple]:
    return list(itertools.combinations_with_replacement(points, 3))


# ---------------------------------------------------------------------------
# Local-to-global concatenation check
# ---------------------------------------------------------------------------


@dataclass
class LocalToGlobalReport:
    intersections_ok: bool
    lengths_ok: bool
    defect: tuple
    piece_defects: list
    worst_intersections: dict
    short_pieces: list

    @property
    def passed(self) -> bool:
        return self.intersections_ok and self.lengths_ok


def _path_length(g: GraphSpace, path: Sequence):
    return sum((g.distance(a, b) for a, b in zip(path, path[1:])), 0)


def _validate_path(g: GraphSpace, path: Sequence):
    for a, b in zip(path, path[1:]):
        if not g.is_adjacent(a, b):
            raise StructuralError(f"({a!r}, {b!r}) is not an edge")


def local_to_global_check(
    g: GraphSpace,
    pieces: Sequence[Sequence],
    k,
    L0,
    f: Callable = lambda r: 0,
    radii: Iterable = (0, 1, 2),
) -> LocalToGlobalReport:
    """Check the hypotheses of the local-to-global lemma on a concrete path.

    ``pieces`` alternates alpha_1, beta_2, alpha_3, ..., beta_n, alpha_{n+1}
    (so pieces with odd positions, counting from 1, are alphas).  Consecutive
    pieces must share their junction vertex.
    """
    if not pieces:
        raise StructuralError("empty decomposition")
    for p in pieces:
        if not p:
            raise StructuralError("empty piece")
        _validate_path(g, p)
    for p, q in zip(pieces, pieces[1:]):
        if p[-1] != q[0]:
            raise StructuralError(f"pieces do not concatenate at {p[-1]!r} / {q[0]!r}")
    whole = list(pieces[0])
    for p in pieces[1:]:
        whole.extend(p[1:])

    betas = [j for j in range(len(pieces)) if j % 2 == 1]
    worst: dict = {}
    ok = True
    for r in radii:
        radius = 3 * k + r
        for j in betas:
            beta = [g.index(v) for v in pieces[j]]
            near = g.distance_to_set(beta) * g.unit <= radius
            for other in (j - 2, j + 2, j - 1, j + 1):
                if not 0 <= other < len(pieces):
                    continue
                meet = [v for v in pieces[other] if near[g.index(v)]]
                diam = (
                    max(g.distance(a, b) for a in meet for b in meet) if meet else 0
                )
                key = (r, j, other)
                worst[key] = diam
                if diam > f(r):
                    ok = False
    short = [j for j in betas if _path_length(g, pieces[j]) < L0]
    return LocalToGlobalReport(
        intersections_ok=ok,
        lengths_ok=not short,
        defect=unparam_qg_defect(g, whole),
        piece_defects=[unparam_qg_defect(g, p) for p in pieces],
        worst_intersections=worst,
        short_pieces=short,
    )
