"""Command-line front end: ``tango <command> --config FILE --out DIR``.

Exit codes: 0 success, 1 usage or configuration error, 2 the planner found no
path, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys

import numpy as np

from . import pipeline
from .cross import EvaluationError
from .iris import EllipsoidSolverError, SeedError
from .kinematics import density_values
from .sampling import DegenerateDistributionError
from .tensor_train import TensorTrain

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_NUMERICAL = 0, 1, 2, 3

EXPORT_KINDS = ("density-slice", "tt-slice", "regions", "waypoints")

log = logging.getLogger("tango")


def _vector(text):
    try:
        return np.array([float(x) for x in text.replace(",", " ").split()])
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a list of numbers: {text!r}") from exc


def _pair(text):
    v = _vector(text)
    if len(v) != 2 or not np.all(v == np.round(v)):
        raise argparse.ArgumentTypeError(f"expected two joint indices, got {text!r}")
    return tuple(int(x) for x in v)


def build_parser():
    p = argparse.ArgumentParser(prog="tango", description="Density-guided planning over convex safe regions.")
    p.add_argument("-v", "--verbose", action="count", default=0, help="repeat for more log output")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("-c", "--config", required=config_required, help="pipeline YAML file")
        sp.add_argument("-s", "--seed", type=int, help="override the configured seed")
        sp.add_argument("-o", "--out", default="tango_out", help="artifact directory (default: %(default)s)")

    common(sub.add_parser("approximate", help="TT-Cross approximation of the density and its complement"))
    common(sub.add_parser("sample", help="draw and rank feasible and obstacle configurations"))
    common(sub.add_parser("regions", help="cluster obstacles, grow and prune safe regions"))
    sp = sub.add_parser("plan", help="plan between two configurations")
    common(sp)
    sp.add_argument("--start", type=_vector, required=True, help="start joints, e.g. --start=-0.1,0.2,0.3 (use '=' when the first value is negative)")
    sp.add_argument("--goal", type=_vector, required=True, help="goal joints")
    common(sub.add_parser("bench", help="TANGO versus RRT on random queries"))
    sp = sub.add_parser("export-plot", help="write a CSV table for external plotting")
    sp.add_argument("artifact", help="TT, regions or plan file")
    sp.add_argument("--kind", required=True, help=f"one of {', '.join(EXPORT_KINDS)}")
    sp.add_argument("-c", "--config", help="pipeline YAML (needed for density and TT slices)")
    sp.add_argument("--dims", type=_pair, default=(0, 1), help="two joints spanning the slice (default 0,1)")
    sp.add_argument("--fix", type=_vector, help="values of the remaining joints (default zeros)")
    sp.add_argument("--output", "-O", help="CSV path (default: stdout)")
    return p


def _config(args):
    cfg = pipeline.PipelineConfig.load(args.config)
    return cfg.with_seed(args.seed) if args.seed is not None else cfg


def _write_rows(rows, header, dest):
    fh = open(dest, "w", newline="") if dest else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    finally:
        if dest:
            fh.close()


def _export(args):
    kind = args.kind
    if kind not in EXPORT_KINDS:
        raise pipeline.ConfigError(f"--kind: unsupported export kind {kind!r}; choose from {', '.join(EXPORT_KINDS)}")
    if not os.path.exists(args.artifact) and not (kind == "density-slice" and args.artifact == "-"):
        raise pipeline.ConfigError(f"artifact {args.artifact} does not exist")
    if kind in ("density-slice", "tt-slice"):
        if not args.config:
            raise pipeline.ConfigError(f"--config: required for {kind}")
        cfg = pipeline.PipelineConfig.load(args.config)
        grid = cfg.grid()
        fix = np.zeros(grid.ndim) if args.fix is None else _full_fix(args.fix, args.dims, grid.ndim)
        if kind == "tt-slice":
            src = TensorTrain.load(args.artifact)
        else:
            arm, metric = cfg.robot(), cfg.metric()
            src = lambda q: density_values(arm, metric, q)  # noqa: E731
        vals = pipeline.density_slice(src, grid, args.dims, fix)
        _write_rows(vals.tolist(), [f"col{j}" for j in range(vals.shape[1])], args.output)
        return EXIT_OK
    with open(args.artifact) as fh:
        data = json.load(fh)
    if kind == "waypoints":
        wp = np.asarray(data.get("waypoints", []), dtype=float)
        m = wp.shape[1] if wp.ndim == 2 else len(data.get("q_start", []))
        _write_rows([[i, *row] for i, row in enumerate(wp.tolist())], ["index"] + [f"q{j}" for j in range(m)], args.output)
        return EXIT_OK
    loaded = pipeline.load_regions(args.artifact)
    rows = []
    dim = loaded["raw"]["dim"]
    fix = np.zeros(dim) if args.fix is None else _full_fix(args.fix, args.dims, dim)
    for r, poly in enumerate(loaded["regions"]):
        section = pipeline.slice_polytope(poly, args.dims, fix)
        for k, (x, y) in enumerate(section.vertices_2d()):
            rows.append([r, k, x, y])
    _write_rows(rows, ["region", "vertex", "x", "y"], args.output)
    return EXIT_OK


def _full_fix(fix, dims, ndim):
    """Accept either a full joint vector or just the joints outside ``dims``."""
    if len(fix) == ndim:
        return fix
    others = [k for k in range(ndim) if k not in dims]
    if len(fix) != len(others):
        raise pipeline.ConfigError(f"--fix: expected {len(others)} or {ndim} values, got {len(fix)}")
    full = np.zeros(ndim)
    full[others] = fix
    return full


def run(args):
    cmd = args.command
    if cmd == "export-plot":
        return _export(args)
    cfg = _config(args)
    out = args.out
    os.makedirs(out, exist_ok=True)
    if cmd == "approximate":
        rep = pipeline.approximate(cfg, out)
        log.info("held-out relative error %.3e, %d parameters, ranks %s",
                 rep["heldout_relative_error"], rep["parameter_count"], rep["ranks"])
    elif cmd == "sample":
        rep = pipeline.sample(cfg, out)
        log.info("%d feasible (%d best), %d obstacle (%d best) samples",
                 len(rep["feasible"]["q"]), len(rep["feasible_best"]["q"]),
                 len(rep["obstacle"]["q"]), len(rep["obstacle_best"]["q"]))
    elif cmd == "regions":
        rep = pipeline.regions(cfg, out)
        d = rep["diagnostics"]
        log.info("%d obstacles, %d regions (%d before pruning)",
                 d["obstacles"], d["regions_after_prune"], d["regions_before_prune"])
    elif cmd == "plan":
        res = pipeline.plan(cfg, out, args.start, args.goal)
        if not res.ok:
            log.warning("no plan: %s", res.status)
            return EXIT_INFEASIBLE
        log.info("cost %.6g through regions %s, %d waypoints, pdf score %.4g",
                 res.cost, res.region_path, len(res.waypoints), res.pdf_score)
    elif cmd == "bench":
        _, summary = pipeline.bench(cfg, out)
        for name, s in summary["planners"].items():
            log.info("%s: success %.2f, median waypoints %s, mean pdf score %s",
                     name, s["success_rate"], s["median_waypoints"], s["mean_pdf_score"])
    return EXIT_OK


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    level = logging.WARNING - 10 * min(args.verbose + 1, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except pipeline.ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (EvaluationError, EllipsoidSolverError, DegenerateDistributionError, SeedError,
            np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
