"""Config-driven experiment runs: generate an instance, run the named stages
in order, and persist artifacts, a summary CSV and a manifest.

Everything written to CSV is a deterministic function of the config, so two
runs with the same seeds produce byte-identical CSV files.  Wall times live
only in ``manifest.json``.
"""

from __future__ import annotations

import hashlib
import json
import platform
import time
import traceback
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import metadata
from pathlib import Path

from . import instances, io
from .cone import build_cone, build_nets, rescale
from .covers import build_covers, build_trees, embed_product, map_fc, verify_cover_conditions, verify_hat_lemmas
from .errors import ParameterError
from .metric import check_metric, four_point_delta
from .pipeline import cubulate, recubulate
from .projection import (
    build_qtms,
    grid_lines,
    perturb_distances,
    sweep,
    tree_axes,
    tripod_lines,
    verify_projection_axioms,
)

METRIC_GENERATORS = {
    "one_point": lambda p, seed: instances.one_point(),
    "two_point": lambda p, seed: instances.two_point(Fraction(p.get("gap", "1/2"))),
    "dyadic_ultrametric": lambda p, seed: instances.dyadic_ultrametric(p["depth"], Fraction(p["r"])),
    "tree_leaves": lambda p, seed: instances.ultrametric_tree_leaves(
        p["depth"], p["branching"], Fraction(p["r"])),
    "segment": lambda p, seed: instances.segment_points(p["count"]),
    "grid_points": lambda p, seed: instances.grid_points(p["side"], p.get("dim", 2)),
    "file": lambda p, seed: io.read_metric(p["path"]),
}
FAMILY_GENERATORS = {
    "tripod_lines": lambda p, seed: tripod_lines(p["leg_length"]),
    "grid_lines": lambda p, seed: grid_lines(p["n"], p["spacing"]),
    "tree_axes": lambda p, seed: tree_axes(instances.random_tree(p["vertices"], seed),
                                           p["line_count"], seed),
    "family_file": lambda p, seed: io.read_family_json(p["path"]),
}
METRIC_STAGES = ("metric", "cone", "delta", "covers", "trees", "embed", "cubulate")
FAMILY_STAGES = ("pcx_verify", "pcx_build", "pcx_sweep")

DEFAULT_PARAMS = {
    "r": "1/8",
    "k_max": 3,
    "strategy": None,
    "eps": None,
    "K": None,
    "L": 1,
    "K_sweep": list(range(0, 13)),
    "scheme": "identity",
    "delta": 0,
}
DEFAULT_CAPS = {"vertices": 5000, "pairs": 200, "triples": 80, "samples": 20000, "sweep_pairs": 2000}

SCHEMA = {
    "type": "object",
    "required": ["generator", "seed"],
    "properties": {
        "name": {"type": "string"},
        "generator": {
            "type": "object",
            "required": ["name"],
            "properties": {
                "name": {"enum": sorted(METRIC_GENERATORS) + sorted(FAMILY_GENERATORS)},
                "params": {"type": "object"},
            },
        },
        "seed": {"type": "integer"},
        "stages": {"type": "array", "items": {"enum": list(METRIC_STAGES + FAMILY_STAGES)}},
        "params": {"type": "object", "properties": {k: {} for k in DEFAULT_PARAMS}},
        "caps": {"type": "object", "properties": {k: {"type": "integer", "minimum": 1} for k in DEFAULT_CAPS}},
        "output": {"type": "string"},
    },
}


@dataclass
class ExperimentConfig:
    generator: str
    seed: int
    generator_params: dict = field(default_factory=dict)
    stages: list = field(default_factory=list)
    params: dict = field(default_factory=dict)
    caps: dict = field(default_factory=dict)
    output: str = "run"
    name: str = "experiment"

    @classmethod
    def from_dict(cls, data: dict) -> ExperimentConfig:
        extra = set(data) - set(SCHEMA["properties"])
        if extra:
            raise ParameterError(f"unknown config keys: {sorted(extra)}")
        gen = data.get("generator")
        if not isinstance(gen, dict) or "name" not in gen:
            raise ParameterError("config needs generator.name")
        if "seed" not in data or not isinstance(data["seed"], int):
            raise ParameterError("config needs an integer seed")
        cfg = cls(
            generator=gen["name"],
            seed=data["seed"],
            generator_params=dict(gen.get("params", {})),
            stages=list(data.get("stages", [])),
            params={**DEFAULT_PARAMS, **data.get("params", {})},
            caps={**DEFAULT_CAPS, **data.get("caps", {})},
            output=data.get("output", "run"),
            name=data.get("name", "experiment"),
        )
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> ExperimentConfig:
        return cls.from_dict(json.loads(Path(path).read_text()))

    def validate(self):
        is_family = self.generator in FAMILY_GENERATORS
        if self.generator not in METRIC_GENERATORS and not is_family:
            raise ParameterError(f"unknown generator {self.generator!r}")
        allowed = FAMILY_STAGES if is_family else METRIC_STAGES
        for s in self.stages:
            if s not in allowed:
                raise ParameterError(f"stage {s!r} does not apply to generator {self.generator!r}")
        unknown = set(self.params) - set(DEFAULT_PARAMS)
        if unknown:
            raise ParameterError(f"unknown params: {sorted(unknown)}")
        for k, v in self.caps.items():
            if k not in DEFAULT_CAPS:
                raise ParameterError(f"unknown cap {k!r}")
            if not isinstance(v, int) or v <= 0:
                raise ParameterError(f"cap {k} must be a positive integer")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "generator": {"name": self.generator, "params": self.generator_params},
            "seed": self.seed,
            "stages": self.stages,
            "params": self.params,
            "caps": self.caps,
            "output": self.output,
        }


@dataclass
class Bundle:
    directory: Path
    status: str
    artifacts: list
    summary: list
    manifest: dict
    failed_stage: str | None = None

    @property
    def ok(self) -> bool:
        return self.status == "ok"


class _Context:
    """Lazily built intermediate objects shared by the stages."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        p = cfg.params
        self.r = Fraction(p["r"])
        self.k_max = int(p["k_max"])
        self._cache: dict = {}

    def get(self, key, build):
        if key not in self._cache:
            self._cache[key] = build()
        return self._cache[key]

    def base(self):
        return self.get("base", lambda: rescale(
            METRIC_GENERATORS[self.cfg.generator](self.cfg.generator_params, self.cfg.seed)))

    def strategy(self):
        s = self.cfg.params["strategy"]
        if s:
            return s
        return {"segment": "line_dyadic", "grid_points": "grid"}.get(self.cfg.generator, "ultrametric")

    def coords(self):
        if self.cfg.generator != "grid_points":
            return None
        gp = self.cfg.generator_params
        side = gp["side"]
        step = self.base().diameter() / max(side - 1, 1)
        return {p: tuple(i * step for i in p) for p in self.base().points}

    def cone(self):
        return self.get("cone", lambda: build_cone(build_nets(self.base(), self.r, self.k_max, self.cfg.seed)))

    def covers(self):
        eps = self.cfg.params["eps"]
        return self.get("covers", lambda: build_covers(
            self.base(), self.r, self.k_max, self.strategy(),
            eps=None if eps is None else Fraction(eps), coords=self.coords()))

    def forest(self):
        return self.get("forest", lambda: build_trees(self.covers()))

    def maps(self):
        return self.get("maps", lambda: {c: map_fc(self.cone(), self.forest(), c)
                                         for c in self.covers().colours})

    def embedding(self):
        caps = self.cfg.caps
        return self.get("embedding", lambda: embed_product(
            self.cone(), self.forest(), self.maps(), pair_cap=caps["pairs"],
            triple_cap=caps["triples"], samples=caps["samples"], seed=self.cfg.seed))

    def family(self):
        def build():
            fam = FAMILY_GENERATORS[self.cfg.generator](self.cfg.generator_params, self.cfg.seed)
            verify_projection_axioms(fam)
            return fam
        return self.get("family", build)

    def perturbed(self):
        p = self.cfg.params
        return self.get("perturbed", lambda: perturb_distances(self.family(), p["scheme"], p["delta"]))


def _stage_metric(ctx: _Context, out: Path):
    m = ctx.base()
    viol = check_metric(m)
    files = [io.write_metric_json(m, out / "metric.json")]
    return files, [("points", m.n), ("diameter", m.diameter()), ("scale", m.scale), ("violations", len(viol))]


def _stage_cone(ctx, out):
    cone = ctx.cone()
    files = io.write_cone(cone, out / "cone_vertices.csv", out / "cone_edges.csv", out / "nets.json")
    rows = [("vertices", cone.graph.n), ("edges", len(cone.graph.edges()))]
    rows += [(f"level_{k}", len(V)) for k, V in enumerate(cone.nets.levels)]
    return files, rows


def _stage_delta(ctx, out):
    return [], [("four_point_delta", four_point_delta(ctx.cone().graph))]


def _stage_covers(ctx, out):
    cov = ctx.covers()
    rep = verify_cover_conditions(cov, ctx.cone().nets)
    files = [io.write_covers_json(cov, out / "covers.json")]
    rows = [("colours", len(cov.colours)), ("eps", cov.eps)]
    rows += [(f"condition_{k}", v) for k, v in rep.summary().items()]
    return files, rows


def _stage_trees(ctx, out):
    forest = ctx.forest()
    files = [io.write_forest_csv(forest, out / "forest.csv")]
    rows = [(f"tree_{c}_vertices", forest.trees[c].n) for c in ctx.covers().colours]
    bad = verify_hat_lemmas(ctx.cone(), forest, ctx.maps())
    return files, rows + [("hat_lemma_failures", len(bad))]


def _stage_embed(ctx, out):
    emb = ctx.embedding()
    files = [io.write_embedding_csv(emb, out / "embedding.csv", ctx.cfg.name)]
    return files, [("lambda", emb.qi.lam), ("eps", emb.qi.eps), ("quasimedian_defect", emb.defect),
                   ("trees", len(ctx.covers().colours))]


def _stage_cubulate(ctx, out):
    cap = ctx.cfg.caps["vertices"]
    res = cubulate(ctx.cone(), ctx.embedding().point_map, cap=cap, seed=ctx.cfg.seed)
    again = recubulate(res, cap=cap)
    files = list(io.write_median_graph(res.complex, out / "complex_edges.csv", out / "complex_hyperplanes.csv"))
    rows = list(res.summary().items())
    rows += [("idempotent_defect", again.defect), ("idempotent_lambda", again.qi.lam),
             ("idempotent_eps", again.qi.eps)]
    return files, rows


def _stage_pcx_verify(ctx, out):
    fam = ctx.family()
    files = [io.write_family_json(fam, out / "family.json")]
    return files, [("members", fam.m), ("xi", fam.xi), ("expected_xi", fam.expected_xi)]


def _stage_pcx_build(ctx, out):
    p = ctx.cfg.params
    K = p["K"] if p["K"] is not None else max(ctx.family().xi, 1)
    qt = build_qtms(ctx.family(), ctx.perturbed(), Fraction(K), Fraction(p["L"]))
    files = [io.write_quasitree_csv(qt, out / "quasitree.csv")]
    rows = [("K", Fraction(K)), ("L", Fraction(p["L"])), ("connected", qt.connected),
            ("joined_pairs", sum(1 for v in qt.pair_edges.values() if v))]
    if qt.connected:
        rows.append(("four_point_delta", four_point_delta(qt.graph)))
    return files, rows


def _stage_pcx_sweep(ctx, out):
    p = ctx.cfg.params
    res = sweep(ctx.family(), ctx.perturbed(), p["K_sweep"], L=p["L"], seed=ctx.cfg.seed,
                pair_limit=ctx.cfg.caps["sweep_pairs"])
    files = [io.write_sweep_csv(res, out / "sweep.csv")]
    return files, [("threshold", res.threshold)]


STAGES = {
    "metric": _stage_metric,
    "cone": _stage_cone,
    "delta": _stage_delta,
    "covers": _stage_covers,
    "trees": _stage_trees,
    "embed": _stage_embed,
    "cubulate": _stage_cubulate,
    "pcx_verify": _stage_pcx_verify,
    "pcx_build": _stage_pcx_build,
    "pcx_sweep": _stage_pcx_sweep,
}


def _versions() -> dict:
    out = {"python": platform.python_version()}
    for pkg in ("artifact", "numpy", "scipy", "click"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    return out


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run_experiment(cfg: ExperimentConfig, output=None) -> Bundle:
    """Run every stage in order; a failing stage stops the run and is recorded."""
    cfg.validate()
    out = Path(output or cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    ctx = _Context(cfg)
    artifacts, summary, times = [], [], {}
    status, failed, failure = "ok", None, None
    for stage in cfg.stages:
        t0 = time.perf_counter()
        try:
            files, rows = STAGES[stage](ctx, out)
        except Exception as exc:  # noqa: BLE001 - recorded in the bundle
            status, failed = "failed", stage
            failure = {
                "stage": stage,
                "error": type(exc).__name__,
                "message": str(exc),
                "witness": repr(getattr(exc, "witness", None)),
                "partial": repr(getattr(exc, "partial", None)),
                "traceback": traceback.format_exc(),
            }
            io.write_json(out / "failure.json", failure)
            times[stage] = time.perf_counter() - t0
            break
        times[stage] = time.perf_counter() - t0
        artifacts.append({"stage": stage, "files": [
            {"path": f.name, "sha256": _digest(f)} for f in files]})
        summary.extend((stage, k, v) for k, v in rows)
    summary_path = io.write_csv(out / "summary.csv", ["stage", "metric", "value"], summary)
    manifest = {
        "config": cfg.to_dict(),
        "schema": SCHEMA,
        "seed": cfg.seed,
        "versions": _versions(),
        "status": status,
        "failed_stage": failed,
        "failure": failure,
        "artifacts": artifacts,
        "summary": {"path": summary_path.name, "sha256": _digest(summary_path)},
        "wall_times": times,
    }
    io.write_json(out / "manifest.json", manifest)
    return Bundle(out, status, artifacts, summary, manifest, failed)
