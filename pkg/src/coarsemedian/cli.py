"""Command-line interface.  Every instance command mirrors the experiment
config keys and writes into ``--out``."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import io
from .errors import ConditionError, ParameterError, ResourceError, StructuralError
from .experiment import (
    DEFAULT_CAPS,
    FAMILY_GENERATORS,
    METRIC_GENERATORS,
    SCHEMA,
    ExperimentConfig,
    _Context,
    run_experiment,
)

ERRORS = (ConditionError, ParameterError, ResourceError, StructuralError)


def _value(text: str):
    try:
        return int(text)
    except ValueError:
        return text


def _params(pairs) -> dict:
    out = {}
    for item in pairs:
        if "=" not in item:
            raise click.BadParameter(f"expected key=value, got {item!r}", param_hint="--param")
        k, v = item.split("=", 1)
        out[k] = _value(v)
    return out


def instance_options(family: bool = False):
    names = sorted(FAMILY_GENERATORS if family else METRIC_GENERATORS)

    def wrap(f):
        f = click.option("--out", type=click.Path(file_okay=False), default="out", show_default=True)(f)
        f = click.option("--seed", type=int, default=None,
                         help="Seed for generators and net orders (required unless reading a file).")(f)
        f = click.option("--param", "gen_params", multiple=True, metavar="KEY=VALUE",
                         help="Generator parameter; repeatable.")(f)
        f = click.option("--input", "input_path", type=click.Path(exists=True, dir_okay=False),
                         help="Read the instance from a file instead of a generator.")(f)
        f = click.option("--generator", type=click.Choice(names))(f)
        if not family:
            f = click.option("--eps", default=None, help="Cover margin, e.g. 5/29.")(f)
            f = click.option("--strategy", type=click.Choice(["ultrametric", "line_dyadic", "grid"]))(f)
            f = click.option("--k-max", type=int, default=3, show_default=True)(f)
            f = click.option("--r", "r", default="1/8", show_default=True)(f)
        else:
            f = click.option("--L", "L", default="1", show_default=True)(f)
            f = click.option("--K", "K", default=None, help="Attachment constant (default max(xi, 1)).")(f)
            f = click.option("--delta", type=int, default=0, show_default=True)(f)
            f = click.option("--scheme", type=click.Choice(["identity", "floor"]), default="identity",
                             show_default=True)(f)
        return f

    return wrap


def _config(stages, family=False, generator=None, input_path=None, gen_params=(), seed=None,
            out="out", **kw) -> ExperimentConfig:
    if input_path:
        generator = "family_file" if family else "file"
        params = {"path": str(input_path)}
    elif generator:
        params = _params(gen_params)
        if seed is None:
            raise click.UsageError("--seed is required with --generator")
    else:
        raise click.UsageError("give --generator or --input")
    cfg_params = {}
    if family:
        cfg_params.update(scheme=kw["scheme"], delta=kw["delta"], K=kw["K"], L=kw["L"])
    else:
        cfg_params.update(r=kw["r"], k_max=kw["k_max"], strategy=kw["strategy"], eps=kw["eps"])
    if seed is None:
        seed = 0
    try:
        return ExperimentConfig.from_dict({
            "generator": {"name": generator, "params": params},
            "seed": seed,
            "stages": list(stages),
            "params": cfg_params,
            "output": str(out),
        })
    except ParameterError as exc:
        raise click.UsageError(str(exc)) from exc


def _run(cfg: ExperimentConfig):
    bundle = run_experiment(cfg)
    for stage, key, value in bundle.summary:
        click.echo(f"{stage}.{key} = {io.fmt(value)}")
    if not bundle.ok:
        f = bundle.manifest["failure"]
        click.echo(f"FAILED at {f['stage']}: {f['error']}: {f['message']}", err=True)
        sys.exit(1)
    click.echo(f"wrote {bundle.directory}")


@click.group()
def main():
    """Coarse-median geometry on finite instances."""


# -- metric / cone / covers / trees / embed / cubulate -------------------------


@main.group()
def metric():
    """Finite metric spaces."""


@metric.command("check")
@instance_options()
def metric_check(**kw):
    """Check the metric axioms and report the diameter."""
    _run(_config(["metric"], **kw))


@main.group()
def cone():
    """Hyperbolic cones."""


@cone.command("build")
@instance_options()
def cone_build(**kw):
    """Build nets and the cone; export vertices, edges and nets."""
    _run(_config(["cone", "delta"], **kw))


@main.group()
def covers():
    """Coloured cover sequences."""


@covers.command("build")
@instance_options()
def covers_build(**kw):
    """Build covers and check every condition against seeded nets."""
    _run(_config(["covers"], **kw))


@covers.command("verify")
@instance_options()
@click.option("--covers", "covers_path", type=click.Path(exists=True, dir_okay=False), required=True)
def covers_verify(covers_path, **kw):
    """Check a cover JSON against the instance and seeded nets."""
    from .covers import verify_cover_conditions

    cfg = _config([], **kw)
    ctx = _Context(cfg)
    try:
        cov = io.read_covers_json(covers_path, ctx.base())
        rep = verify_cover_conditions(cov, ctx.cone().nets)
    except ERRORS as exc:
        raise click.ClickException(str(exc)) from exc
    rows = [("covers_verify", k, v) for k, v in rep.summary().items()]
    io.write_report_csv(Path(cfg.output) / "covers_verify.csv", rows)
    for _, k, v in rows:
        click.echo(f"{k}: {'pass' if v else 'FAIL'}")
    if not rep.passed:
        sys.exit(1)


@main.group()
def trees():
    """Trees induced by covers."""


@trees.command("build")
@instance_options()
def trees_build(**kw):
    """Export the parent array of every colour tree."""
    _run(_config(["trees"], **kw))


@main.command()
@instance_options()
def embed(**kw):
    """Map the cone into the product of colour trees and measure it."""
    _run(_config(["cone", "covers", "trees", "embed"], **kw))


@main.command()
@instance_options()
def cubulate(**kw):
    """Cubulate the cone through its product-of-trees embedding."""
    _run(_config(["cone", "covers", "embed", "cubulate"], **kw))


@main.command()
@instance_options()
@click.option("--budget", type=int, default=200_000, show_default=True,
              help="Triples scanned per quasiconvexity check before sampling.")
def convexity(budget, **kw):
    """Forward check on an apex geodesic and reverse check on every half-space."""
    from .median import halfspace
    from .pipeline import convexity_correspondence, cubulate as run_cubulate, quasiconvexity_constant, \
        reverse_quasiconvexity

    cfg = _config([], **kw)
    ctx = _Context(cfg)
    try:
        cone_ = ctx.cone()
        res = run_cubulate(cone_, ctx.embedding().point_map, cap=cfg.caps["vertices"], seed=cfg.seed)
        path = cone_.graph.geodesic(cone_.apex, cone_.vertices[-1])
        k = quasiconvexity_constant(cone_, path, budget=budget, seed=cfg.seed).constant
        fwd = convexity_correspondence(cone_, res, path, k, budget=budget, seed=cfg.seed)
        rows = [("geodesic", "k", k), ("geodesic", "hausdorff", fwd.hausdorff),
                ("geodesic", "bound", fwd.bound), ("geodesic", "reverse_k0", fwd.reverse_k0)]
        for h in range(len(res.complex.hyperplanes)):
            for side in (True, False):
                rq = reverse_quasiconvexity(res, halfspace(res.complex, h, side), budget=budget, seed=cfg.seed)
                rows.append((f"halfspace_{h}_{'+' if side else '-'}", "k0", rq.constant))
    except ERRORS as exc:
        raise click.ClickException(str(exc)) from exc
    io.write_report_csv(Path(cfg.output) / "convexity.csv", rows)
    worst = max((v for name, key, v in rows if key in ("k0", "reverse_k0")), default=0)
    click.echo(f"geodesic: k={io.fmt(k)} hausdorff={io.fmt(fwd.hausdorff)} bound={io.fmt(fwd.bound)}")
    click.echo(f"largest reverse constant over {len(rows) - 4} half-spaces: {io.fmt(worst)}")


@main.command("approx-sets")
@click.option("--graph", "graph_path", type=click.Path(exists=True, dir_okay=False), required=True,
              help="Median graph as an edge-list CSV.")
@click.option("--f1", required=True, help="JSON list of vertex ids.")
@click.option("--f2", required=True, help="JSON list of vertex ids.")
@click.option("--K", "K", type=int, default=None)
@click.option("--out", type=click.Path(file_okay=False), default="out", show_default=True)
def approx_sets(graph_path, f1, f2, K, out):
    """Hulls of two nearby vertex sets and their isomorphic cores."""
    from .median import verify_median_graph
    from .pipeline import approximate_finite_sets

    g = io.read_graph_csv(graph_path)
    q = verify_median_graph(g)
    if not q:
        raise click.ClickException(f"not a median graph; witness triple {q.triple}")
    F1 = [io._hashable(v) for v in json.loads(f1)]
    F2 = [io._hashable(v) for v in json.loads(f2)]
    try:
        rep = approximate_finite_sets(q, F1, F2, K)
    except ERRORS as exc:
        raise click.ClickException(str(exc)) from exc
    rows = [
        ("approx_sets", "input_hausdorff", rep.input_hausdorff),
        ("approx_sets", "scale_K", rep.scale),
        ("approx_sets", "differing_hyperplanes", len(rep.differing)),
        ("approx_sets", "count_bound", rep.count_bound),
        ("approx_sets", "common_hyperplanes", len(rep.common)),
        ("approx_sets", "core_vertices", len(rep.core1)),
        ("approx_sets", "isomorphism", rep.is_isomorphism),
        ("approx_sets", "core_hausdorff", rep.core_hausdorff),
    ]
    io.write_report_csv(Path(out) / "approx_sets.csv", rows)
    for _, k, v in rows:
        click.echo(f"{k} = {io.fmt(v)}")


# -- projection complexes ------------------------------------------------------


@main.group()
def pcx():
    """Projection families and quasitrees."""


@pcx.command("verify")
@instance_options(family=True)
def pcx_verify(**kw):
    """Compute the least axiom constant and export the family."""
    _run(_config(["pcx_verify"], family=True, **kw))


@pcx.command("build")
@instance_options(family=True)
def pcx_build(**kw):
    """Attach members into a quasitree and export its weighted edges."""
    _run(_config(["pcx_verify", "pcx_build"], family=True, **kw))


@pcx.command("sweep")
@instance_options(family=True)
def pcx_sweep(**kw):
    """Sweep K and report the distance-formula threshold."""
    _run(_config(["pcx_verify", "pcx_sweep"], family=True, **kw))


# -- experiments ---------------------------------------------------------------


@main.group()
def experiment():
    """Config-driven runs."""


@experiment.command("run")
@click.argument("config", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(file_okay=False), default=None, help="Overrides the config output.")
def experiment_run(config, out):
    """Run every stage in CONFIG."""
    try:
        cfg = ExperimentConfig.load(config)
    except (ParameterError, json.JSONDecodeError) as exc:
        raise click.UsageError(f"bad config: {exc}") from exc
    if out:
        cfg.output = out
    _run(cfg)


@experiment.command("schema")
def experiment_schema():
    """Print the config schema."""
    click.echo(json.dumps({**SCHEMA, "defaults": {"caps": DEFAULT_CAPS}}, indent=2))


if __name__ == "__main__":
    main()
