"""RRT baseline and the TANGO-vs-RRT benchmark harness."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import asdict, dataclass

import numpy as np

from .planner import DISCONNECTED, OK, PlanQuery, PlanResult, locate, path_in_safe_sets, pdf_score, shortest_path

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
RECORD_FIELDS = ("planner", "query_id", "success", "waypoint_count", "cost", "pdf_score")


@dataclass(frozen=True)
class BenchConfig:
    n_queries: int = 20
    rng_seed: int = 0
    min_start_goal_distance: float = 2.0
    rrt_step: float = 0.1
    rrt_max_iters: int = 20_000
    rrt_goal_bias: float = 0.05
    samples_per_segment: int = 100
    max_endpoint_draws: int = 100_000

    def __post_init__(self):
        if self.n_queries < 1:
            raise ValueError("bench.n_queries: must be >= 1")
        if not self.rrt_step > 0:
            raise ValueError("bench.rrt_step: must be > 0")
        if self.rrt_max_iters < 1:
            raise ValueError("bench.rrt_max_iters: must be >= 1")
        if not 0 <= self.rrt_goal_bias < 1:
            raise ValueError("bench.rrt_goal_bias: must be in [0, 1)")
        if self.samples_per_segment < 2:
            raise ValueError("bench.samples_per_segment: must be >= 2")
        if self.min_start_goal_distance < 0:
            raise ValueError("bench.min_start_goal_distance: must be >= 0")


@dataclass
class BenchRecord:
    planner: str
    query_id: int
    success: bool
    waypoint_count: int
    cost: float
    pdf_score: float | None
    wall_time: float


class ObstacleSet:
    """All obstacle polytopes stacked for vectorized membership tests."""

    def __init__(self, obstacles, dim):
        self.dim = dim
        self.n = len(obstacles)
        if self.n:
            self.A = np.vstack([o.A for o in obstacles])
            self.b = np.concatenate([o.b for o in obstacles])
            sizes = np.array([o.n_facets for o in obstacles])
            self.starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])

    def hits(self, pts, tol=0.0):
        """Boolean per point: inside at least one obstacle."""
        pts = np.atleast_2d(pts)
        if not self.n:
            return np.zeros(len(pts), dtype=bool)
        viol = pts @ self.A.T - self.b  # (N, total facets)
        worst = np.maximum.reduceat(viol, self.starts, axis=1)
        return np.any(worst <= tol, axis=1)

    def segment_free(self, p, q, resolution):
        n = max(2, int(np.ceil(np.linalg.norm(q - p) / resolution)) + 1)
        s = np.linspace(0.0, 1.0, n)[:, None]
        return not self.hits(p + s * (q - p)).any()


def rrt_plan(q_s, q_t, obstacles, limits, cfg, rng=None):
    """Single-tree RRT in configuration space.

    Samples uniformly in the bounding box of ``limits`` (with goal bias
    ``cfg.rrt_goal_bias``), extends the nearest node by at most ``cfg.rrt_step``
    and checks each new edge at ``rrt_step / 4`` spacing. Returns the raw tree
    path, without shortcutting.
    """
    q_s = np.asarray(q_s, dtype=float)
    q_t = np.asarray(q_t, dtype=float)
    obs = obstacles if isinstance(obstacles, ObstacleSet) else ObstacleSet(obstacles, len(q_s))
    for name, q in (("start", q_s), ("goal", q_t)):
        if not limits.contains(q):
            raise ValueError(f"{name} configuration lies outside the joint limits")
        if obs.hits(q)[0]:
            raise ValueError(f"{name} configuration lies inside an obstacle")
    rng = np.random.default_rng(cfg.rng_seed) if rng is None else rng
    lo, hi = limits.bounding_box()
    step, res = cfg.rrt_step, cfg.rrt_step / 4
    m = len(q_s)
    nodes = np.empty((cfg.rrt_max_iters + 2, m))
    parent = np.full(cfg.rrt_max_iters + 2, -1, dtype=np.int64)
    nodes[0] = q_s
    count = 1

    def finish(last):
        path = [q_t]
        i = last
        while i >= 0:
            path.append(nodes[i])
            i = parent[i]
        wp = np.array(path[::-1])
        cost = float(np.linalg.norm(np.diff(wp, axis=0), axis=1).sum())
        return PlanResult(wp, [], cost, OK, diagnostics={"tree_size": count})

    if np.linalg.norm(q_t - q_s) <= step and obs.segment_free(q_s, q_t, res):
        return finish(0)
    for _ in range(cfg.rrt_max_iters):
        target = q_t if rng.random() < cfg.rrt_goal_bias else rng.uniform(lo, hi)
        d2 = np.einsum("ij,ij->i", nodes[:count] - target, nodes[:count] - target)
        near = int(np.argmin(d2))
        delta = target - nodes[near]
        dist = np.sqrt(d2[near])
        if dist < 1e-12:
            continue
        new = target if dist <= step else nodes[near] + delta * (step / dist)
        if not limits.contains(new) or not obs.segment_free(nodes[near], new, res):
            continue
        if np.array_equal(new, q_t):
            return finish(near)
        nodes[count] = new
        parent[count] = near
        count += 1
        if np.linalg.norm(q_t - new) <= step and obs.segment_free(new, q_t, res):
            return finish(count - 1)
    return PlanResult(np.zeros((0, m)), [], float("inf"), DISCONNECTED, diagnostics={"tree_size": count})


def draw_query(graph, limits, cfg, rng):
    """Start/goal pair inside safe regions and at least the minimum distance apart."""
    lo, hi = limits.bounding_box()
    for _ in range(cfg.max_endpoint_draws):
        q_s, q_t = rng.uniform(lo, hi), rng.uniform(lo, hi)
        if np.linalg.norm(q_t - q_s) < cfg.min_start_goal_distance:
            continue
        if locate(graph, q_s) and locate(graph, q_t):
            return q_s, q_t
    return None


def _record(name, qid, plan, pdf, grid, cfg, wall):
    if plan.ok:
        score = pdf_score(plan, pdf, grid, cfg.samples_per_segment)
        return BenchRecord(name, qid, True, len(plan.waypoints), plan.cost, score, wall)
    return BenchRecord(name, qid, False, 0, float("nan"), None, wall)


def run_benchmark(graph, obstacles, limits, pdf, grid, cfg, max_discrete_paths=20, cost_kind="path_length"):
    """Run TANGO and RRT on ``cfg.n_queries`` random queries.

    Each query draws from its own generator seeded by ``(rng_seed, query id)``,
    so the table does not depend on evaluation order.

    Returns ``(records, summary)``.
    """
    obs = ObstacleSet(obstacles, limits.dim)
    records = []
    for qid in range(cfg.n_queries):
        rng = np.random.default_rng([cfg.rng_seed, qid])
        pair = draw_query(graph, limits, cfg, rng)
        if pair is None:
            log.warning("query %d: no admissible endpoints found", qid)
            for name in ("TANGO", "RRT"):
                records.append(BenchRecord(name, qid, False, 0, float("nan"), None, 0.0))
            continue
        q_s, q_t = pair
        t0 = time.perf_counter()
        plan = shortest_path(graph, PlanQuery(q_s, q_t, cost_kind, max_discrete_paths))
        rec = _record("TANGO", qid, plan, pdf, grid, cfg, time.perf_counter() - t0)
        if plan.ok and not path_in_safe_sets(plan, graph, cfg.samples_per_segment):
            log.error("query %d: TANGO path leaves the safe regions", qid)
            rec.success = False
        records.append(rec)
        t0 = time.perf_counter()
        try:
            plan = rrt_plan(q_s, q_t, obs, limits, cfg, rng=np.random.default_rng([cfg.rng_seed, qid, 1]))
        except ValueError as exc:
            log.warning("query %d: RRT rejected the endpoints: %s", qid, exc)
            plan = PlanResult(np.zeros((0, len(q_s))), [], float("inf"), DISCONNECTED)
        records.append(_record("RRT", qid, plan, pdf, grid, cfg, time.perf_counter() - t0))
    return records, summarize(records)


def summarize(records):
    out = {"schema_version": SCHEMA_VERSION, "planners": {}}
    for name in ("TANGO", "RRT"):
        rows = [r for r in records if r.planner == name]
        ok = [r for r in rows if r.success]
        wp = np.array([r.waypoint_count for r in ok], dtype=float)
        out["planners"][name] = {
            "queries": len(rows),
            "successes": len(ok),
            "success_rate": len(ok) / len(rows) if rows else 0.0,
            "mean_waypoints": float(wp.mean()) if len(ok) else None,
            "median_waypoints": float(np.median(wp)) if len(ok) else None,
            "mean_pdf_score": float(np.mean([r.pdf_score for r in ok])) if ok else None,
            "mean_cost": float(np.mean([r.cost for r in ok])) if ok else None,
        }
    # queries both planners solved, for a like-for-like comparison
    by_q = {}
    for r in records:
        if r.success:
            by_q.setdefault(r.query_id, {})[r.planner] = r
    both = [v for v in by_q.values() if len(v) == 2]
    out["paired"] = {
        "queries": len(both),
        "TANGO_mean_pdf_score": float(np.mean([v["TANGO"].pdf_score for v in both])) if both else None,
        "RRT_mean_pdf_score": float(np.mean([v["RRT"].pdf_score for v in both])) if both else None,
    }
    return out


def _fmt(x):
    if x is None or (isinstance(x, float) and not np.isfinite(x)):
        return ""
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_records_csv(records, fh, with_time=False):
    """CSV table of records; ``wall_time`` only when ``with_time`` is set."""
    fields = RECORD_FIELDS + (("wall_time",) if with_time else ())
    fh.write(f"# schema_version={SCHEMA_VERSION}\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(fields)
    for r in records:
        d = asdict(r)
        w.writerow([_fmt(d[f]) for f in fields])


def read_records_csv(fh):
    lines = [ln for ln in fh if not ln.startswith("#")]
    out = []
    for row in csv.DictReader(lines):
        out.append(BenchRecord(
            planner=row["planner"],
            query_id=int(row["query_id"]),
            success=row["success"] == "1",
            waypoint_count=int(row["waypoint_count"]),
            cost=float(row["cost"]) if row["cost"] else float("nan"),
            pdf_score=float(row["pdf_score"]) if row["pdf_score"] else None,
            wall_time=float(row["wall_time"]) if row.get("wall_time") else float("nan"),
        ))
    return out
