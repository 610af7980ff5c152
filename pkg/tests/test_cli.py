import csv
import json
import os

import numpy as np
import pytest

from conftest import PLANAR_CONFIG
from tango import pipeline
from tango.cli import EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_OK, main


def run(*args):
    return main([str(a) for a in args])


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_help_and_usage_errors(capsys):
    assert run("--help") == EXIT_OK
    assert run("approximate") == EXIT_CONFIG
    assert run("frobnicate") == EXIT_CONFIG


def test_missing_config_file(tmp_path, capsys):
    assert run("approximate", "-c", tmp_path / "nope.yaml", "-o", tmp_path) == EXIT_CONFIG
    assert "cannot read config" in capsys.readouterr().err


def test_invalid_reshape_exit_code(tmp_path, capsys):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text(f"robot: {os.path.join(os.path.dirname(PLANAR_CONFIG), 'planar3_robot.yaml')}\n"
                   "grid: {bins: 128, reshape: [8, 8, 3]}\n")
    assert run("approximate", "-c", cfg, "-o", tmp_path / "out") == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "grid.reshape" in err and "8*8*3" in err


def test_plan_exit_codes(planar_run, tmp_path):
    out = planar_run["out"]
    loaded = pipeline.load_regions(os.path.join(out, pipeline.REGIONS))
    s = ",".join(map(str, loaded["seeds"][0]))
    assert run("plan", "-c", PLANAR_CONFIG, "-o", out, f"--start={s}", f"--goal={s}") == EXIT_OK
    with open(os.path.join(out, pipeline.PLAN)) as fh:
        assert len(json.load(fh)["waypoints"]) == 2
    graph, _ = pipeline.region_graph(out)
    from tango.planner import locate

    rng = np.random.default_rng(1)
    while True:
        q = rng.uniform(-np.pi, np.pi, 3)
        if not locate(graph, q):
            break
    g = ",".join(map(str, q))
    assert run("plan", "-c", PLANAR_CONFIG, "-o", out, f"--start={s}", f"--goal={g}") == EXIT_INFEASIBLE
    assert run("plan", "-c", PLANAR_CONFIG, "-o", out, "--start=1,2", f"--goal={g}") == EXIT_CONFIG
    assert run("plan", "-c", PLANAR_CONFIG, "-o", out, "--start=a,b,c", f"--goal={g}") == EXIT_CONFIG


def test_export_density_slice(tmp_path):
    dest = tmp_path / "slice.csv"
    assert run("export-plot", "-", "--kind", "density-slice", "-c", PLANAR_CONFIG, "--fix", "0", "--output", dest) == EXIT_OK
    rows = read_csv(dest)
    assert len(rows) == 129 and all(len(r) == 128 for r in rows)
    vals = np.array(rows[1:], dtype=float)
    assert np.all((vals >= 0) & (vals <= 1))


def test_export_tt_slice_and_regions(planar_run, tmp_path):
    out = planar_run["out"]
    dest = tmp_path / "tt.csv"
    assert run("export-plot", os.path.join(out, pipeline.DENSITY_TT), "--kind", "tt-slice", "-c", PLANAR_CONFIG,
               "--dims", "1,2", "--fix=-0.5", "--output", dest) == EXIT_OK
    assert len(read_csv(dest)) == 129
    dest = tmp_path / "regions.csv"
    assert run("export-plot", os.path.join(out, pipeline.REGIONS), "--kind", "regions", "--output", dest) == EXIT_OK
    rows = read_csv(dest)
    assert rows[0] == ["region", "vertex", "x", "y"]


def test_export_empty_plan(tmp_path):
    plan = tmp_path / "plan.json"
    plan.write_text(json.dumps({"status": "disconnected", "waypoints": [], "q_start": [0, 0, 0]}))
    dest = tmp_path / "wp.csv"
    assert run("export-plot", plan, "--kind", "waypoints", "--output", dest) == EXIT_OK
    assert read_csv(dest) == [["index", "q0", "q1", "q2"]]


def test_export_errors(tmp_path):
    assert run("export-plot", tmp_path / "missing.json", "--kind", "waypoints") == EXIT_CONFIG
    plan = tmp_path / "p.json"
    plan.write_text("{}")
    assert run("export-plot", plan, "--kind", "histogram") == EXIT_CONFIG
    assert run("export-plot", "-", "--kind", "density-slice") == EXIT_CONFIG


def test_numerical_failure_exit_code(tmp_path, monkeypatch):
    from tango import cli
    from tango.sampling import DegenerateDistributionError

    def boom(cfg, out):
        raise DegenerateDistributionError("density has no positive mass")

    monkeypatch.setattr(cli.pipeline, "sample", boom)
    assert run("sample", "-c", PLANAR_CONFIG, "-o", tmp_path) == cli.EXIT_NUMERICAL


def test_approximate_deterministic(tmp_path):
    cfg = tmp_path / "small.yaml"
    cfg.write_text(f"robot: {os.path.join(os.path.dirname(PLANAR_CONFIG), 'planar3_robot.yaml')}\n"
                   "grid: {bins: 32, reshape: [4, 4, 4, 4, 4, 2, 2, 2, 2, 2]}\n"
                   "cross: {max_rank: 10, tol: 1.0e-3}\n")
    for sub in ("a", "b"):
        assert run("approximate", "-c", cfg, "-o", tmp_path / sub, "--seed", 5) == EXIT_OK
    a = (tmp_path / "a" / pipeline.DENSITY_TT).read_bytes()
    assert a == (tmp_path / "b" / pipeline.DENSITY_TT).read_bytes()
    with open(tmp_path / "a" / pipeline.APPROX_REPORT) as fh:
        assert json.load(fh)["mode_sizes"] == [4, 4, 4, 4, 4, 2, 2, 2, 2, 2]
