import json
from fractions import Fraction

import pytest
from click.testing import CliRunner
from hypothesis import given, strategies as st

from coarsemedian import io
from coarsemedian.cli import main
from coarsemedian.covers import build_covers
from coarsemedian.errors import ParameterError, StructuralError
from coarsemedian.experiment import ExperimentConfig, run_experiment
from coarsemedian.instances import dyadic_ultrametric, grid_graph, segment_points
from coarsemedian.projection import grid_lines, verify_projection_axioms

ids = st.recursive(st.integers(-50, 50) | st.text("abcxyz", min_size=1, max_size=4),
                   lambda inner: st.tuples(inner, inner) | st.tuples(inner), max_leaves=6)


@given(ids)
def test_id_round_trip(v):
    assert io.decode_id(io.encode_id(v)) == v


def test_fmt_and_parse():
    assert io.fmt(Fraction(3, 6)) == "1/2" and io.fmt(Fraction(4)) == "4"
    assert io.fmt(True) == "true" and io.fmt(None) == ""
    assert io.parse_number("5/29") == Fraction(5, 29) and io.parse_number("0.25") == 0.25


def test_metric_round_trips(tmp_path):
    m = segment_points(5)
    back = io.read_metric(io.write_metric_json(m, tmp_path / "m.json"))
    assert back.points == m.points and back.dist == m.dist
    (tmp_path / "m.csv").write_text("0,1/4,1/2\n1/4,0,1/4\n1/2,1/4,0\n")
    csv_m = io.read_metric(tmp_path / "m.csv")
    assert csv_m.points == (0, 1, 2) and csv_m.distance(0, 2) == Fraction(1, 2)
    (tmp_path / "h.csv").write_text('a,b\n0,1/3\n1/3,0\n')
    assert io.read_metric(tmp_path / "h.csv").points == ("a", "b")
    (tmp_path / "bad.csv").write_text("0,1\n1,0,2\n")
    with pytest.raises(StructuralError):
        io.read_metric(tmp_path / "bad.csv")


def test_graph_round_trip(tmp_path):
    g = grid_graph(3, 2)
    back = io.read_graph_csv(io.write_graph_csv(g, tmp_path / "g.csv"))
    assert set(back.vertices) == set(g.vertices)
    assert all(back.distance(u, v) == g.distance(u, v) for u in g.vertices for v in g.vertices)


def test_covers_round_trip(tmp_path):
    Z = dyadic_ultrametric(3, Fraction(1, 8))
    cov = build_covers(Z, Fraction(1, 8), 3)
    back = io.read_covers_json(io.write_covers_json(cov, tmp_path / "c.json"), Z)
    assert back.elements == cov.elements and back.eps == cov.eps and back.colours == cov.colours


def test_family_round_trip(tmp_path):
    fam = grid_lines(4, 2)
    verify_projection_axioms(fam)
    back = io.read_family_json(io.write_family_json(fam, tmp_path / "f.json"))
    assert back.projections == fam.projections and back.xi == fam.xi
    assert [set(g.vertices) for g in back.members] == [set(g.vertices) for g in fam.members]


# -- experiments ---------------------------------------------------------------


def two_point_config(out, **extra):
    return ExperimentConfig.from_dict({
        "generator": {"name": "two_point"},
        "seed": 3,
        "stages": ["cone", "covers", "embed", "cubulate"],
        "params": {"r": "1/8", "k_max": 2},
        "output": str(out),
        **extra,
    })


def test_empty_stage_list(tmp_path):
    cfg = ExperimentConfig.from_dict({"generator": {"name": "one_point"}, "seed": 0, "output": str(tmp_path)})
    bundle = run_experiment(cfg)
    assert bundle.ok and bundle.artifacts == [] and bundle.summary == []
    assert (tmp_path / "manifest.json").exists()


@pytest.mark.parametrize("data", [
    {"generator": {"name": "moebius"}, "seed": 0},
    {"generator": {"name": "segment"}, "seed": 0, "stages": ["pcx_sweep"]},
    {"generator": {"name": "segment"}, "seed": 0, "params": {"colour": 3}},
    {"generator": {"name": "segment"}},
    {"generator": {"name": "segment"}, "seed": 0, "extra": 1},
])
def test_config_errors_before_any_stage(data, tmp_path):
    with pytest.raises(ParameterError):
        ExperimentConfig.from_dict({**data, "output": str(tmp_path / "never")})
    assert not (tmp_path / "never").exists()


def test_two_point_bundle(tmp_path):
    bundle = run_experiment(two_point_config(tmp_path))
    assert bundle.ok
    assert [a["stage"] for a in bundle.artifacts] == ["cone", "covers", "embed", "cubulate"]
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["status"] == "ok" and manifest["seed"] == 3
    for art in manifest["artifacts"]:
        for f in art["files"]:
            assert (tmp_path / f["path"]).exists()
    assert io.read_csv(tmp_path / "summary.csv")


def test_failure_is_recorded(tmp_path):
    bundle = run_experiment(two_point_config(tmp_path, caps={"vertices": 2}))
    assert not bundle.ok and bundle.failed_stage == "cubulate"
    failure = json.loads((tmp_path / "failure.json").read_text())
    assert failure["error"] == "ResourceError" and failure["partial"] != "None"


def test_runs_are_byte_identical(tmp_path):
    run_experiment(two_point_config(tmp_path / "a"))
    run_experiment(two_point_config(tmp_path / "b"))
    csvs = sorted(p.name for p in (tmp_path / "a").glob("*.csv"))
    assert csvs
    for name in csvs:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


# -- command line ---------------------------------------------------------------


def invoke(*args):
    return CliRunner().invoke(main, [str(a) for a in args])


def test_cli_metric_and_cone(tmp_path):
    r = invoke("metric", "check", "--generator", "segment", "--param", "count=5", "--seed", 0, "--out", tmp_path)
    assert r.exit_code == 0, r.output
    r = invoke("cone", "build", "--generator", "two_point", "--seed", 1, "--k-max", 2, "--out", tmp_path)
    assert r.exit_code == 0, r.output
    assert (tmp_path / "manifest.json").exists()


def test_cli_seed_is_required(tmp_path):
    r = invoke("metric", "check", "--generator", "segment", "--param", "count=5", "--out", tmp_path)
    assert r.exit_code == 2 and "--seed" in r.output


def test_cli_covers_build_and_verify(tmp_path):
    common = ["--generator", "dyadic_ultrametric", "--param", "depth=3", "--param", "r=1/8",
              "--seed", 0, "--k-max", 3, "--out", tmp_path]
    r = invoke("covers", "build", *common)
    assert r.exit_code == 0, r.output
    covers_file = next(tmp_path.glob("covers*.json"))
    r = invoke("covers", "verify", *common, "--covers", covers_file)
    assert r.exit_code == 0, r.output
    assert "C3: pass" in r.output


def test_cli_pipeline_commands(tmp_path):
    common = ["--generator", "two_point", "--seed", 0, "--k-max", 2, "--out", tmp_path]
    for cmd in (["trees", "build"], ["embed"], ["cubulate"], ["convexity"]):
        r = invoke(*cmd, *common)
        assert r.exit_code == 0, (cmd, r.output)


def test_cli_cubulate_failure_exits_nonzero(tmp_path):
    r = invoke("cubulate", "--generator", "grid_points", "--param", "side=5", "--seed", 0,
               "--r", "1/29", "--k-max", 2, "--out", tmp_path)
    assert r.exit_code == 1 and "FAILED at cubulate" in r.output
    assert (tmp_path / "failure.json").exists()


def test_cli_approx_sets(tmp_path):
    g = io.write_graph_csv(grid_graph(4, 4), tmp_path / "g.csv")
    r = invoke("approx-sets", "--graph", g, "--f1", "[[0,0],[2,2]]", "--f2", "[[0,0],[3,2]]", "--out", tmp_path)
    assert r.exit_code == 0, r.output
    rows = {row["instance"]: row["value"] for row in io.read_csv(tmp_path / "approx_sets.csv")}
    assert rows["differing_hyperplanes"] == "1" and rows["isomorphism"] == "true"
    assert "differing_hyperplanes = 1" in r.output and "isomorphism = true" in r.output


def test_cli_approx_sets_rejects_non_median(tmp_path):
    tri = tmp_path / "t.csv"
    tri.write_text("u,v\n0,1\n1,2\n2,0\n")
    r = invoke("approx-sets", "--graph", tri, "--f1", "[0]", "--f2", "[1]", "--out", tmp_path)
    assert r.exit_code == 1 and "not a median graph" in r.output


def test_cli_projection_commands(tmp_path):
    common = ["--generator", "grid_lines", "--param", "n=4", "--param", "spacing=2", "--seed", 0, "--out", tmp_path]
    for cmd in (["pcx", "verify"], ["pcx", "build", "--K", 3], ["pcx", "sweep"]):
        r = invoke(*cmd, *common)
        assert r.exit_code == 0, (cmd, r.output)
    fam_file = next(tmp_path.glob("family*.json"))
    r = invoke("pcx", "verify", "--input", fam_file, "--out", tmp_path / "again")
    assert r.exit_code == 0, r.output


def test_cli_experiment_run_and_schema(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"generator": {"name": "two_point"}, "seed": 2,
                               "stages": ["cone", "covers", "embed", "cubulate"], "params": {"k_max": 2}}))
    r = invoke("experiment", "run", cfg, "--out", tmp_path / "run")
    assert r.exit_code == 0, r.output
    assert (tmp_path / "run" / "manifest.json").exists()
    r = invoke("experiment", "schema")
    assert r.exit_code == 0 and "properties" in json.loads(r.output)
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"generator": {"name": "nope"}, "seed": 0}))
    assert invoke("experiment", "run", bad).exit_code == 2


def test_cli_metric_from_file(tmp_path):
    m = io.write_metric_json(segment_points(4), tmp_path / "m.json")
    r = invoke("metric", "check", "--input", m, "--out", tmp_path / "o")
    assert r.exit_code == 0, r.output

