"""Pipeline configuration and the stages that turn a robot model into plans.

Every stage reads and writes plain files in an output directory so the
expensive preprocessing runs once. Artifacts are deterministic for a fixed
configuration and seed; wall-clock measurements go to separate ``*_timing``
files.
"""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import os
import time
from dataclasses import dataclass

import numpy as np
import yaml

from . import bench as bench_mod
from .clustering import NOISE, cluster_to_polytope, rnn_dbscan
from .cross import tt_cross
from .geometry import Ellipsoid, Polytope
from .grid import Grid
from .iris import iris_batch, prune_indices
from .kinematics import MetricConfig, SerialArm, density, density_values, metric_cost, robot_from_dict
from .planner import PlanQuery, RegionGraph, build_graph, path_in_safe_sets, pdf_score, shortest_path
from .sampling import tt_sample
from .tensor_train import TensorTrain, parameter_count, tt_scale_shift

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1

DENSITY_TT = "density.tt"
INVERSE_TT = "inverse.tt"
APPROX_REPORT = "approximate.json"
SAMPLES = "samples.json"
REGIONS = "regions.json"
GRAPH = "graph.json"
PLAN = "plan.json"
BENCH_CSV = "bench_records.csv"
BENCH_SUMMARY = "bench_summary.json"

DEFAULTS = {
    "schema_version": SCHEMA_VERSION,
    "seed": 0,
    "robot": None,
    # unset metric fields fall back to the robot file, then to MetricConfig defaults
    "metric": {"kind": None, "gamma": None, "sigma_radius": None, "regularization_eps": None},
    "grid": {"bins": 128, "reshape": None},
    "cross": {"max_rank": 30, "n_sweeps": 30, "tol": 1e-3, "init_rank": 2, "n_heldout": 1000},
    "sampling": {"k_c": 15000, "k_c_best": 500, "n_o": 15000, "n_o_best": 10000},
    "clustering": {"k": 10, "inflation": 0.0},
    "iris": {"n_iter": 2},
    "prune": {"coverage_threshold": 0.9, "volume_samples": 10000},
    "planner": {"cost_kind": "path_length", "max_discrete_paths": 20, "samples_per_segment": 100},
    "bench": {
        "n_queries": 20,
        "min_start_goal_distance": 2.0,
        "rrt_step": 0.1,
        "rrt_max_iters": 20000,
        "rrt_goal_bias": 0.05,
        "samples_per_segment": 100,
    },
}


class ConfigError(ValueError):
    """Invalid pipeline configuration; the message names the field."""


# ------------------------------------------------------------------ config
def _merge(base, over, path=""):
    out = copy.deepcopy(base)
    for key, val in (over or {}).items():
        name = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"{name}: unknown field")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"{name}: expected a mapping")
            out[key] = _merge(base[key], val, name + ".")
        else:
            out[key] = val
    return out


def _positive_int(cfg, section, key, allow_zero=False):
    val = cfg[section][key]
    if isinstance(val, bool) or not isinstance(val, (int, np.integer)) or val < (0 if allow_zero else 1):
        raise ConfigError(f"{section}.{key}: expected a {'non-negative' if allow_zero else 'positive'} integer, got {val!r}")


def _positive(cfg, section, key):
    val = cfg[section][key]
    if isinstance(val, bool) or not isinstance(val, (int, float)) or not val > 0:
        raise ConfigError(f"{section}.{key}: expected a positive number, got {val!r}")


@dataclass
class PipelineConfig:
    data: dict
    base_dir: str = "."

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                raw = yaml.safe_load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
        return cls.from_dict(raw or {}, os.path.dirname(os.path.abspath(path)))

    @classmethod
    def from_dict(cls, raw, base_dir="."):
        if not isinstance(raw, dict):
            raise ConfigError("config: expected a mapping at the top level")
        cfg = cls(_merge(DEFAULTS, raw), base_dir)
        cfg.validate()
        return cfg

    def __getitem__(self, key):
        return self.data[key]

    def with_seed(self, seed):
        data = copy.deepcopy(self.data)
        data["seed"] = int(seed)
        return PipelineConfig(data, self.base_dir)

    def validate(self):
        d = self.data
        if d["schema_version"] != SCHEMA_VERSION:
            raise ConfigError(f"schema_version: unsupported version {d['schema_version']!r}")
        if isinstance(d["seed"], bool) or not isinstance(d["seed"], int) or d["seed"] < 0:
            raise ConfigError(f"seed: expected a non-negative integer, got {d['seed']!r}")
        if d["robot"] is None:
            raise ConfigError("robot: required (path to a robot file or an inline mapping)")
        try:
            self.metric()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"metric: {exc}") from exc
        for key in ("max_rank", "n_sweeps", "init_rank", "n_heldout"):
            _positive_int(d, "cross", key)
        _positive(d, "cross", "tol")
        for key in ("k_c", "k_c_best", "n_o", "n_o_best"):
            _positive_int(d, "sampling", key)
        s = d["sampling"]
        if s["k_c_best"] > s["k_c"]:
            raise ConfigError("sampling.k_c_best: must not exceed sampling.k_c")
        if s["n_o_best"] > s["n_o"]:
            raise ConfigError("sampling.n_o_best: must not exceed sampling.n_o")
        _positive_int(d, "clustering", "k")
        if not isinstance(d["clustering"]["inflation"], (int, float)) or d["clustering"]["inflation"] < 0:
            raise ConfigError("clustering.inflation: expected a non-negative number")
        _positive_int(d, "iris", "n_iter")
        thr = d["prune"]["coverage_threshold"]
        if not isinstance(thr, (int, float)) or not 0 < thr <= 1:
            raise ConfigError(f"prune.coverage_threshold: expected a value in (0, 1], got {thr!r}")
        _positive_int(d, "prune", "volume_samples")
        if d["planner"]["cost_kind"] not in ("path_length", "squared_length"):
            raise ConfigError("planner.cost_kind: expected 'path_length' or 'squared_length'")
        _positive_int(d, "planner", "max_discrete_paths")
        _positive_int(d, "planner", "samples_per_segment")
        try:
            self.bench_config()
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        # building the grid checks bins and reshape against the robot
        self.grid()

    # -------------------------------------------------------- derived objects
    def robot_data(self):
        r = self.data["robot"]
        if isinstance(r, dict):
            return r
        path = r if os.path.isabs(r) else os.path.join(self.base_dir, r)
        try:
            with open(path) as fh:
                data = yaml.safe_load(fh)
        except OSError as exc:
            raise ConfigError(f"robot: cannot read robot file {path}: {exc.strerror}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"robot: {path} does not hold a mapping")
        return data

    def robot(self):
        try:
            return robot_from_dict(self.robot_data())
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def metric(self):
        robot_metric = self.robot_data().get("metric") or {}
        unknown = set(robot_metric) - set(DEFAULTS["metric"])
        if unknown:
            raise ConfigError(f"robot.metric.{sorted(unknown)[0]}: unknown field")
        merged = {**robot_metric, **{k: v for k, v in self.data["metric"].items() if v is not None}}
        return MetricConfig(**merged)

    def grid(self):
        arm = self.robot()
        g = self.data["grid"]
        bins = g["bins"]
        if isinstance(bins, int):
            bins = [bins] * arm.n_active
        if len(bins) != arm.n_active:
            raise ConfigError(f"grid.bins: {len(bins)} entries for {arm.n_active} active joints")
        try:
            return Grid.uniform(arm.active_limits, bins, g["reshape"])
        except ValueError as exc:
            raise ConfigError(f"grid.reshape: {exc}") from exc

    def bench_config(self):
        return bench_mod.BenchConfig(rng_seed=self.data["seed"], **self.data["bench"])


# ------------------------------------------------------------------ file helpers
def _write_json(path, obj):
    with open(path, "w") as fh:
        fh.write(json.dumps(obj, sort_keys=True, indent=1, allow_nan=False))
        fh.write("\n")


def _read_json(path, what):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"missing {what} file {path}; run the earlier pipeline stage first") from exc


def _load_tt(path, what):
    try:
        return TensorTrain.load(path)
    except FileNotFoundError as exc:
        raise ConfigError(f"missing {what} file {path}; run 'approximate' first") from exc


def _file_hash(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def _timing(out_dir, stage, seconds):
    _write_json(os.path.join(out_dir, f"{stage}_timing.json"), {"stage": stage, "seconds": seconds})


# ------------------------------------------------------------------ stages
def approximate(cfg, out_dir):
    """TT-Cross approximation of the density and its complement ``1 - p``."""
    os.makedirs(out_dir, exist_ok=True)
    t0 = time.perf_counter()
    arm, grid, metric = cfg.robot(), cfg.grid(), cfg.metric()
    c = cfg["cross"]
    res = tt_cross(
        density(arm, metric, grid),
        max_rank=c["max_rank"],
        n_sweeps=c["n_sweeps"],
        tol=c["tol"],
        seed=cfg["seed"],
        init_rank=c["init_rank"],
        n_heldout=c["n_heldout"],
    )
    inverse = tt_scale_shift(res.tt, -1.0, 1.0)
    res.tt.save(os.path.join(out_dir, DENSITY_TT))
    inverse.save(os.path.join(out_dir, INVERSE_TT))
    report = {
        "schema_version": SCHEMA_VERSION,
        "heldout_relative_error": res.heldout_error,
        "parameter_count": parameter_count(res.tt),
        "inverse_parameter_count": parameter_count(inverse),
        "ranks": list(res.tt.ranks),
        "mode_sizes": list(res.tt.mode_sizes),
        "n_evaluations": res.n_evals,
        "sweeps": res.sweeps,
        "converged": res.converged,
        "grid": grid.to_dict(),
    }
    _write_json(os.path.join(out_dir, APPROX_REPORT), report)
    _timing(out_dir, "approximate", time.perf_counter() - t0)
    return report


def _sample_block(tt, grid, count, seed):
    vidx = tt_sample(tt, count, rng_seed=seed)
    return grid.index_to_value(grid.to_physical(vidx))


def _top(q, score, count):
    order = np.lexsort((np.arange(len(score)), -score))[:count]
    return q[order], score[order]


def sample(cfg, out_dir):
    """Draw configurations from the density and its complement and rank them."""
    t0 = time.perf_counter()
    arm, grid, metric = cfg.robot(), cfg.grid(), cfg.metric()
    pdf = _load_tt(os.path.join(out_dir, DENSITY_TT), "density TT")
    inv = _load_tt(os.path.join(out_dir, INVERSE_TT), "inverse TT")
    s = cfg["sampling"]
    seq = np.random.SeedSequence(cfg["seed"]).spawn(2)
    feas_seed, obs_seed = (int(x.generate_state(1)[0]) for x in seq)
    q_f = _sample_block(pdf, grid, s["k_c"], feas_seed)
    q_o = _sample_block(inv, grid, s["n_o"], obs_seed)
    p_f = density_values(arm, metric, q_f)
    p_o = density_values(arm, metric, q_o)

    # colliding "good" configurations are unusable and become obstacles
    n_collide = 0
    if isinstance(arm, SerialArm) and arm.collision_pairs:
        hit = np.asarray(arm.self_collision(q_f), dtype=bool)
        n_collide = int(hit.sum())
        q_o = np.vstack([q_o, q_f[hit]])
        p_o = np.concatenate([p_o, p_f[hit]])
        q_f, p_f = q_f[~hit], p_f[~hit]
    best_f, best_fp = _top(q_f, p_f, s["k_c_best"])
    best_o, best_op = _top(q_o, 1.0 - p_o, s["n_o_best"] + n_collide)

    def block(q, dens):
        return {"q": q.tolist(), "density": dens.tolist(), "metric": np.atleast_1d(metric_cost(arm, q, metric)).tolist()}

    out = {
        "schema_version": SCHEMA_VERSION,
        "grid": grid.to_dict(),
        "feasible": block(q_f, p_f),
        "feasible_best": block(best_f, best_fp),
        "obstacle": block(q_o, p_o),
        "obstacle_best": block(best_o, 1.0 - best_op),
        "reclassified_self_collisions": n_collide,
    }
    _write_json(os.path.join(out_dir, SAMPLES), out)
    _timing(out_dir, "sample", time.perf_counter() - t0)
    return out


def domain_polytope(arm):
    lim = arm.active_limits
    return Polytope.from_box(lim[:, 0], lim[:, 1])


def obstacle_polytopes(points, grid, k, inflation):
    """Convex obstacles from obstacle samples.

    Clusters become hulls; unclustered samples become the grid cell they
    represent, so no sampled obstacle configuration is dropped.
    """
    if len(points) == 0:
        return [], {"clusters": 0, "noise": 0}
    pts = np.unique(points, axis=0)
    if len(pts) < k + 1:
        labels = np.full(len(pts), NOISE)
        clusters = []
    else:
        labels, clusters = rnn_dbscan(pts, k)
    obstacles = [cluster_to_polytope(pts[c], inflation) for c in clusters]
    half = 0.5 * grid.widths + inflation
    for p in pts[labels == NOISE]:
        obstacles.append(Polytope.from_box(p - half, p + half))
    return obstacles, {"clusters": len(clusters), "noise": int(np.sum(labels == NOISE))}


def regions(cfg, out_dir):
    """Obstacles, IRIS regions around the best samples, then pruning."""
    t0 = time.perf_counter()
    arm, grid = cfg.robot(), cfg.grid()
    samples = _read_json(os.path.join(out_dir, SAMPLES), "samples")
    obs_pts = np.asarray(samples["obstacle_best"]["q"], dtype=float).reshape(-1, grid.ndim)
    seeds = np.asarray(samples["feasible_best"]["q"], dtype=float).reshape(-1, grid.ndim)
    dens = np.asarray(samples["feasible_best"]["density"], dtype=float)
    obstacles, cl_info = obstacle_polytopes(obs_pts, grid, cfg["clustering"]["k"], cfg["clustering"]["inflation"])
    domain = domain_polytope(arm)
    batch = iris_batch(seeds, obstacles, domain, n_iter=cfg["iris"]["n_iter"], densities=dens)
    for i, msg in batch.errors:
        log.warning("seed %d: numerical failure: %s", i, msg)
    polys = [r.polytope for r in batch.regions]
    p = cfg["prune"]
    keep, vols = prune_indices(polys, p["coverage_threshold"], p["volume_samples"], seed=cfg["seed"])
    kept = [batch.regions[i] for i in keep]
    out = {
        "schema_version": SCHEMA_VERSION,
        "dim": grid.ndim,
        "domain": domain.to_dict(),
        "regions": [
            {
                "A": r.polytope.A.tolist(),
                "b": r.polytope.b.tolist(),
                "ellipsoid": r.ellipsoid.to_dict(),
                "seed": r.seed.tolist(),
                "volume_estimate": float(vols[i]),
            }
            for i, r in zip(keep, kept)
        ],
        "obstacles": [o.to_dict() for o in obstacles],
        "diagnostics": {
            "seeds": len(seeds),
            "obstacle_samples": len(obs_pts),
            **cl_info,
            "obstacles": len(obstacles),
            "regions_before_prune": len(polys),
            "regions_after_prune": len(kept),
            "seeds_covered": len(batch.covered),
            "seeds_in_obstacles": len(batch.in_obstacle),
            "numerical_errors": [[i, m] for i, m in batch.errors],
        },
    }
    _write_json(os.path.join(out_dir, REGIONS), out)
    _timing(out_dir, "regions", time.perf_counter() - t0)
    return out


def load_regions(path):
    data = _read_json(path, "regions")
    polys = [Polytope(r["A"], r["b"]) for r in data["regions"]]
    ells = [Ellipsoid.from_dict(r["ellipsoid"]) for r in data["regions"]]
    seeds = [np.asarray(r["seed"]) for r in data["regions"]]
    obstacles = [Polytope.from_dict(o) for o in data["obstacles"]]
    domain = Polytope.from_dict(data["domain"])
    return {"regions": polys, "ellipsoids": ells, "seeds": seeds, "obstacles": obstacles, "domain": domain, "raw": data}


def region_graph(out_dir):
    """Region graph for the regions file in ``out_dir``, reusing a cached edge list."""
    reg_path = os.path.join(out_dir, REGIONS)
    loaded = load_regions(reg_path)
    digest = _file_hash(reg_path)
    cache_path = os.path.join(out_dir, GRAPH)
    polys = loaded["regions"]
    if os.path.exists(cache_path):
        cached = _read_json(cache_path, "graph")
        if cached.get("regions_sha256") == digest:
            edges = [(u, v, polys[u].intersect(polys[v])) for u, v in cached["edges"]]
            return RegionGraph(polys, edges), loaded
    graph = build_graph(polys)
    _write_json(cache_path, {
        "schema_version": SCHEMA_VERSION,
        "regions_sha256": digest,
        "edges": [[u, v] for u, v, _ in graph.edges],
    })
    return graph, loaded


def plan(cfg, out_dir, q_start, q_goal, filename=PLAN):
    """Plan between two configurations and write the plan file.

    Failures are reported through ``status`` of the returned result.
    """
    t0 = time.perf_counter()
    grid = cfg.grid()
    q_start = np.asarray(q_start, dtype=float)
    q_goal = np.asarray(q_goal, dtype=float)
    for name, q in (("start", q_start), ("goal", q_goal)):
        if q.shape != (grid.ndim,):
            raise ConfigError(f"{name}: expected {grid.ndim} joint values, got {q.size}")
    graph, _ = region_graph(out_dir)
    pc = cfg["planner"]
    result = shortest_path(graph, PlanQuery(q_start, q_goal, pc["cost_kind"], pc["max_discrete_paths"]))
    if result.ok:
        pdf = _load_tt(os.path.join(out_dir, DENSITY_TT), "density TT")
        result.pdf_score = pdf_score(result, pdf, grid, pc["samples_per_segment"])
        result.diagnostics["path_in_safe_sets"] = path_in_safe_sets(result, graph, pc["samples_per_segment"])
    out = {"schema_version": SCHEMA_VERSION, "q_start": q_start.tolist(), "q_goal": q_goal.tolist(), **result.to_dict()}
    _write_json(os.path.join(out_dir, filename), out)
    _timing(out_dir, "plan", time.perf_counter() - t0)
    return result


def ensure_artifacts(cfg, out_dir):
    """Run any missing preprocessing stage."""
    os.makedirs(out_dir, exist_ok=True)
    if not (os.path.exists(os.path.join(out_dir, DENSITY_TT)) and os.path.exists(os.path.join(out_dir, INVERSE_TT))):
        approximate(cfg, out_dir)
    if not os.path.exists(os.path.join(out_dir, SAMPLES)):
        sample(cfg, out_dir)
    if not os.path.exists(os.path.join(out_dir, REGIONS)):
        regions(cfg, out_dir)


def bench(cfg, out_dir):
    """Benchmark TANGO against RRT; writes the record table and a summary."""
    t0 = time.perf_counter()
    ensure_artifacts(cfg, out_dir)
    grid = cfg.grid()
    pdf = _load_tt(os.path.join(out_dir, DENSITY_TT), "density TT")
    graph, loaded = region_graph(out_dir)
    pc = cfg["planner"]
    records, summary = bench_mod.run_benchmark(
        graph, loaded["obstacles"], loaded["domain"], pdf, grid, cfg.bench_config(),
        max_discrete_paths=pc["max_discrete_paths"], cost_kind=pc["cost_kind"],
    )
    with open(os.path.join(out_dir, BENCH_CSV), "w", newline="") as fh:
        bench_mod.write_records_csv(records, fh)
    with open(os.path.join(out_dir, "bench_timing.csv"), "w", newline="") as fh:
        bench_mod.write_records_csv(records, fh, with_time=True)
    summary["rrt_paths"] = "raw tree paths, no smoothing or time parameterization"
    summary["cost"] = "geometric joint-space path length"
    _write_json(os.path.join(out_dir, BENCH_SUMMARY), summary)
    _timing(out_dir, "bench", time.perf_counter() - t0)
    return records, summary


# ------------------------------------------------------------------ exports
def density_slice(func_or_tt, grid, dims=(0, 1), fixed=None):
    """Values on the 2-D grid slice over joints ``dims``, other joints at ``fixed`` values.

    ``func_or_tt`` is a :class:`TensorTrain` on the grid's virtual index set
    or a callable mapping configurations to values.
    """
    i, j = dims
    fixed = np.zeros(grid.ndim) if fixed is None else np.asarray(fixed, dtype=float)
    base = grid.value_to_index(fixed)
    ii, jj = np.meshgrid(np.arange(grid.bins[i]), np.arange(grid.bins[j]), indexing="ij")
    idx = np.tile(base, (ii.size, 1))
    idx[:, i] = ii.ravel()
    idx[:, j] = jj.ravel()
    if isinstance(func_or_tt, TensorTrain):
        from .tensor_train import tt_eval

        vals = tt_eval(func_or_tt, grid.to_virtual(idx))
    else:
        vals = func_or_tt(grid.index_to_value(idx))
    return vals.reshape(grid.bins[i], grid.bins[j])


def slice_polytope(poly, dims=(0, 1), fixed=None):
    """2-D section of ``poly`` with all other coordinates held at ``fixed``."""
    if poly.dim == 2 and tuple(dims) == (0, 1):
        return poly
    fixed = np.zeros(poly.dim) if fixed is None else np.asarray(fixed, dtype=float)
    others = [k for k in range(poly.dim) if k not in dims]
    A2 = poly.A[:, list(dims)]
    b2 = poly.b - poly.A[:, others] @ fixed[others]
    return Polytope(A2, b2)
