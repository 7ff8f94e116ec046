"""Reading and writing the CSV/JSON formats used by the CLI and the harness.

Point and vertex ids are written as compact JSON (tuples become lists) so
that any hashable id built from ints, strings and tuples round-trips.
Exact values are written as ``p/q`` strings.
"""

from __future__ import annotations

import csv
import json
from fractions import Fraction
from pathlib import Path
from typing import Iterable

from .errors import StructuralError
from .metric import FiniteMetricSpace, GraphSpace


def _plain(v):
    if isinstance(v, tuple):
        return [_plain(x) for x in v]
    return v


def _hashable(v):
    if isinstance(v, list):
        return tuple(_hashable(x) for x in v)
    return v


def encode_id(v) -> str:
    return json.dumps(_plain(v), separators=(",", ":"))


def decode_id(s: str):
    try:
        return _hashable(json.loads(s))
    except json.JSONDecodeError:
        return s


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, Fraction):
        return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def parse_number(s):
    if isinstance(s, (int, float, Fraction)):
        return s if not isinstance(s, int) else Fraction(s)
    s = s.strip()
    if "/" in s or s.lstrip("-").isdigit():
        return Fraction(s)
    return float(s)


def write_csv(path, header: list, rows: Iterable) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(x) for x in row])
    return path


def read_csv(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=fmt) + "\n")
    return path


# -- metric spaces and graphs -----------------------------------------------


def read_metric(path) -> FiniteMetricSpace:
    """JSON ``{"points": [...], "dist": [[...]]}`` or a square CSV matrix.

    A CSV with a header row uses it as point ids; otherwise ids are 0..n-1.
    """
    path = Path(path)
    if path.suffix == ".json":
        data = json.loads(path.read_text())
        pts = [_hashable(p) for p in data["points"]]
        return FiniteMetricSpace.from_matrix(pts, [[parse_number(x) if isinstance(x, str) else x
                                                     for x in row] for row in data["dist"]])
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    try:
        [parse_number(x) for x in rows[0]]
        pts = list(range(len(rows)))
    except ValueError:
        pts, rows = [decode_id(x) for x in rows[0]], rows[1:]
    if any(len(r) != len(pts) for r in rows) or len(rows) != len(pts):
        raise StructuralError("metric CSV is not square")
    return FiniteMetricSpace.from_matrix(pts, [[parse_number(x) for x in r] for r in rows])


def write_metric_json(m: FiniteMetricSpace, path) -> Path:
    return write_json(path, {
        "points": [_plain(p) for p in m.points],
        "dist": [[fmt(x) for x in row] for row in m.dist],
    })


def read_graph_csv(path) -> GraphSpace:
    """Edge list ``u,v[,length]``, optional header."""
    edges = []
    with Path(path).open(newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0] in ("u", "source"):
                continue
            u, v = decode_id(row[0]), decode_id(row[1])
            edges.append((u, v, parse_number(row[2])) if len(row) > 2 and row[2] else (u, v))
    verts = {e[0] for e in edges} | {e[1] for e in edges}
    return GraphSpace(verts, edges)


def write_graph_csv(g: GraphSpace, path) -> Path:
    return write_csv(path, ["u", "v", "length"],
                     ((encode_id(u), encode_id(v), w) for u, v, w in g.edges()))


def write_report_csv(path, rows: Iterable) -> Path:
    """Rows ``(operation, instance, value)``."""
    return write_csv(path, ["operation", "instance", "value"], rows)


# -- median graphs ------------------------------------------------------------


def write_median_graph(q, edges_path, hyperplanes_path) -> tuple[Path, Path]:
    edges = sorted(q.edge_hyperplane().items(), key=lambda kv: (q.index(kv[0][0]), q.index(kv[0][1])))
    a = write_csv(edges_path, ["edge_id", "u", "v"],
                  ((i, encode_id(u), encode_id(v)) for i, ((u, v), _) in enumerate(edges)))
    b = write_csv(hyperplanes_path, ["edge_id", "hyperplane_id"],
                  ((i, h) for i, (_, h) in enumerate(edges)))
    return a, b


# -- cones --------------------------------------------------------------------


def write_cone(cone, vertex_path, edge_path, nets_path) -> list[Path]:
    v = write_csv(vertex_path, ["id", "level", "base_point"],
                  ((encode_id(x), x[0], encode_id(x[1])) for x in cone.vertices))
    e = write_csv(edge_path, ["u", "v", "kind"],
                  ((encode_id(a), encode_id(b), "vertical" if a[0] != b[0] else "horizontal")
                   for a, b, _ in cone.graph.edges()))
    nets = cone.nets
    n = write_json(nets_path, {
        "r": fmt(nets.r),
        "seed": nets.seed,
        "order": [_plain(p) for p in nets.order],
        "levels": [[_plain(p) for p in V] for V in nets.levels],
    })
    return [v, e, n]


# -- covers and forests -------------------------------------------------------


def write_covers_json(cov, path) -> Path:
    return write_json(path, _plain_tree(cov.as_dict()))


def _plain_tree(obj):
    if isinstance(obj, dict):
        return {k: _plain_tree(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain_tree(v) for v in obj]
    return obj


def read_covers_json(path, base: FiniteMetricSpace):
    """Rebuild a cover sequence on ``base`` without validating it."""
    from .covers import ColouredCoverSequence

    data = json.loads(Path(path).read_text())
    colours = tuple(_hashable(c) for c in data["colours"])
    elements = {}
    for lv in data["levels"]:
        masks = []
        for s in lv["sets"]:
            mask = 0
            for p in s:
                mask |= 1 << base.index(_hashable(p))
            masks.append(mask)
        elements[(_hashable(lv["colour"]), lv["level"])] = tuple(masks)
    return ColouredCoverSequence(base, Fraction(data["r"]), Fraction(data["eps"]), colours,
                                 elements, data["strategy"], data["k_max"])


def write_forest_csv(forest, path) -> Path:
    rows = []
    for c in forest.covers.colours:
        par = forest.parent[c]
        for node in forest.covers.nodes(c):
            rows.append((encode_id(c), encode_id(node), encode_id(par[node]) if node in par else ""))
    return write_csv(path, ["colour", "node", "parent"], rows)


def write_embedding_csv(emb, path, instance: str = "") -> Path:
    rows = [
        ("lambda", instance, emb.qi.lam),
        ("eps", instance, emb.qi.eps),
        ("feasible", instance, emb.qi.feasible),
        ("pairs", instance, emb.qi.sample_size),
        ("pairs_exhaustive", instance, emb.exhaustive_pairs),
        ("quasimedian_defect", instance, emb.defect),
        ("triples_exhaustive", instance, emb.exhaustive_triples),
    ]
    return write_report_csv(path, rows)


# -- projection families ------------------------------------------------------


def write_family_json(fam, path) -> Path:
    return write_json(path, {
        "name": fam.name,
        "xi": fam.xi,
        "expected_xi": fam.expected_xi,
        "members": [
            {"vertices": [_plain(v) for v in g.vertices],
             "edges": [[_plain(u), _plain(v)] for u, v, _ in g.edges()]}
            for g in fam.members
        ],
        "projections": [
            {"from": x, "to": y, "set": sorted((_plain(v) for v in s), key=json.dumps)}
            for (x, y), s in sorted(fam.projections.items())
        ],
    })


def read_family_json(path):
    from .projection import ProjectionFamily

    data = json.loads(Path(path).read_text())
    members = [
        GraphSpace([_hashable(v) for v in m["vertices"]],
                   [(_hashable(u), _hashable(v)) for u, v in m["edges"]])
        for m in data["members"]
    ]
    proj = {(p["from"], p["to"]): {_hashable(v) for v in p["set"]} for p in data["projections"]}
    return ProjectionFamily(members, proj, xi=data.get("xi"), expected_xi=data.get("expected_xi"),
                            name=data.get("name", "family"))


def write_quasitree_csv(qt, path) -> Path:
    return write_csv(path, ["u", "v", "length", "kind"],
                     ((encode_id(a), encode_id(b), w, "member" if a[0] == b[0] else "attachment")
                      for a, b, w in qt.edges))


def write_sweep_csv(result, path) -> Path:
    rows = []
    for rep in result.reports:
        if rep.rows is None:
            rows.append((rep.K, "", "", "", "", "", "", "", "", "disconnected"))
            continue
        for r in rep.rows:
            rows.append((r.K, encode_id(r.pair), r.distance, r.sum_K, r.sum_Kp,
                         r.upper, r.lower, r.implication, r.order_total, ""))
    return write_csv(path, ["K", "pair", "d", "sum_K", "sum_Kp", "upper", "lower",
                            "implication", "order_total", "note"], rows)
