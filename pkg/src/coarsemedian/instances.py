"""Seeded generators for the finite spaces used throughout the test corpus."""

from __future__ import annotations

import itertools
import random
from fractions import Fraction

from .errors import ResourceError
from .metric import FiniteMetricSpace, GraphSpace

DEFAULT_CAP = 5000


def _check_cap(size, cap):
    if size > cap:
        raise ResourceError(f"instance would have {size} points, cap is {cap}")


def one_point(name="z") -> FiniteMetricSpace:
    return FiniteMetricSpace.from_matrix([name], [[0]])


def two_point(gap=Fraction(1, 2)) -> FiniteMetricSpace:
    return FiniteMetricSpace.from_matrix([0, 1], [[0, gap], [gap, 0]])


def ultrametric_tree_leaves(depth: int, branching: int, r, cap=DEFAULT_CAP) -> FiniteMetricSpace:
    """Leaves of the rooted ``branching``-ary tree of given depth.

    Leaves are tuples of child indices; ``d(x, y) = r**j / 2`` where ``j`` is
    the depth of their deepest common ancestor, so the diameter is 1/2.
    """
    r = Fraction(r)
    _check_cap(branching**depth, cap)
    leaves = list(itertools.product(range(branching), repeat=depth))

    def d(x, y):
        if x == y:
            return Fraction(0)
        j = next(i for i, (a, b) in enumerate(zip(x, y)) if a != b)
        return r**j / 2

    return FiniteMetricSpace.from_matrix(leaves, [[d(x, y) for y in leaves] for x in leaves])


def dyadic_ultrametric(depth: int, r) -> FiniteMetricSpace:
    return ultrametric_tree_leaves(depth, 2, r)


def segment_points(count: int, length=Fraction(1, 2)) -> FiniteMetricSpace:
    """``count`` evenly spaced points on a segment; ids are integers 0..count-1."""
    if count == 1:
        return one_point(0)
    step = Fraction(length) / (count - 1)
    return FiniteMetricSpace.from_coords({i: (i * step,) for i in range(count)})


def grid_points(side: int, dim: int = 2, length=Fraction(1, 2), cap=DEFAULT_CAP) -> FiniteMetricSpace:
    """``side**dim`` grid points in a cube under the l-infinity metric."""
    _check_cap(side**dim, cap)
    step = Fraction(length) / max(side - 1, 1)
    coords = {
        p: tuple(i * step for i in p) for p in itertools.product(range(side), repeat=dim)
    }
    return FiniteMetricSpace.from_coords(coords, norm="linf")


def path_graph(n_edges: int, offset: int = 0) -> GraphSpace:
    return GraphSpace(
        range(offset, offset + n_edges + 1),
        [(offset + i, offset + i + 1) for i in range(n_edges)],
    )


def cycle_graph(n: int) -> GraphSpace:
    return GraphSpace(range(n), [(i, (i + 1) % n) for i in range(n)])


def grid_graph(*sides: int) -> GraphSpace:
    """Grid with ``sides[i]`` vertices along axis ``i``; vertices are tuples."""
    verts = list(itertools.product(*(range(s) for s in sides)))
    vs = set(verts)
    edges = []
    for v in verts:
        for axis in range(len(sides)):
            w = v[:axis] + (v[axis] + 1,) + v[axis + 1 :]
            if w in vs:
                edges.append((v, w))
    return GraphSpace(verts, edges)


def random_tree(n: int, seed: int) -> GraphSpace:
    """Uniform random recursive tree on ``0..n-1``."""
    rng = random.Random(seed)
    return GraphSpace(range(n), [(i, rng.randrange(i)) for i in range(1, n)])


def rooted_tree(depth: int, branching: int, cap=DEFAULT_CAP) -> GraphSpace:
    """Full ``branching``-ary tree; vertices are tuples of child indices, root ``()``."""
    size = sum(branching**k for k in range(depth + 1))
    _check_cap(size, cap)
    verts = [p for k in range(depth + 1) for p in itertools.product(range(branching), repeat=k)]
    return GraphSpace(verts, [(p[:-1], p) for p in verts if p])
