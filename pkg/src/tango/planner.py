"""Shortest paths through a graph of intersecting convex regions.

The search has two stages. Candidate region sequences are enumerated in order
of a lower bound built from set-to-set distances, then each candidate is
refined by a convex program over one waypoint per traversed intersection.
"""

from __future__ import annotations

import heapq
import itertools
import logging
from dataclasses import dataclass, field

import cvxpy as cp
import networkx as nx
import numpy as np

from .geometry import closest_point, least_distance
from .tensor_train import tt_eval

log = logging.getLogger(__name__)

PATH_LENGTH = "path_length"
SQUARED_LENGTH = "squared_length"

OK = "ok"
NO_REGION = "no_region_contains_endpoint"
DISCONNECTED = "disconnected"

EDGE_MARGIN = 1e-9


class RegionGraph:
    """Safe regions as vertices; an edge wherever two regions overlap with interior.

    Edges are stored once with ``u < v``; ``intersection(u, v)`` works in
    either order.
    """

    def __init__(self, vertices, edges):
        self.vertices = list(vertices)
        self.edges = list(edges)
        self._inter = {}
        self.adjacency = {i: [] for i in range(len(self.vertices))}
        for u, v, poly in self.edges:
            self._inter[(u, v)] = poly
            self.adjacency[u].append(v)
            self.adjacency[v].append(u)
        for nb in self.adjacency.values():
            nb.sort()
        self._dist_cache = {}

    def __len__(self):
        return len(self.vertices)

    @property
    def dim(self):
        return self.vertices[0].dim if self.vertices else 0

    def intersection(self, u, v):
        return self._inter[(u, v) if u < v else (v, u)]


def build_graph(regions, margin=EDGE_MARGIN):
    """Connect every pair of regions whose intersection is deeper than ``margin``."""
    regions = list(regions)
    boxes = [r.bounding_box() for r in regions]
    edges = []
    for u, v in itertools.combinations(range(len(regions)), 2):
        (lu, hu), (lv, hv) = boxes[u], boxes[v]
        if np.any(np.minimum(hu, hv) - np.maximum(lu, lv) <= 2 * margin):
            continue
        inter = regions[u].intersect(regions[v])
        if inter.depth()[0] > margin:
            edges.append((u, v, inter))
    return RegionGraph(regions, edges)


def locate(graph, q, tol=1e-9):
    q = np.asarray(q, dtype=float)
    return [i for i, r in enumerate(graph.vertices) if r.contains(q, tol=tol)]


@dataclass
class PlanQuery:
    q_start: np.ndarray
    q_goal: np.ndarray
    cost_kind: str = PATH_LENGTH
    max_discrete_paths: int = 20

    def __post_init__(self):
        self.q_start = np.asarray(self.q_start, dtype=float)
        self.q_goal = np.asarray(self.q_goal, dtype=float)
        if self.cost_kind not in (PATH_LENGTH, SQUARED_LENGTH):
            raise ValueError(f"cost_kind must be {PATH_LENGTH!r} or {SQUARED_LENGTH!r}")
        if self.max_discrete_paths < 1:
            raise ValueError("max_discrete_paths must be >= 1")
        if not (np.all(np.isfinite(self.q_start)) and np.all(np.isfinite(self.q_goal))):
            raise ValueError("query endpoints must be finite")


@dataclass
class PlanResult:
    waypoints: np.ndarray
    region_path: list
    cost: float
    status: str
    pdf_score: float = float("nan")
    diagnostics: dict = field(default_factory=dict)

    @property
    def ok(self):
        return self.status == OK

    def to_dict(self):
        return {
            "status": self.status,
            "waypoints": np.asarray(self.waypoints).tolist(),
            "region_path": [int(v) for v in self.region_path],
            "cost": None if not np.isfinite(self.cost) else float(self.cost),
            "pdf_score": None if not np.isfinite(self.pdf_score) else float(self.pdf_score),
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_dict(cls, data):
        wp = np.asarray(data.get("waypoints", []), dtype=float)
        cost = data.get("cost")
        score = data.get("pdf_score")
        return cls(
            waypoints=wp,
            region_path=list(data.get("region_path", [])),
            cost=float("nan") if cost is None else float(cost),
            status=data["status"],
            pdf_score=float("nan") if score is None else float(score),
            diagnostics=data.get("diagnostics", {}),
        )


def path_cost(waypoints, cost_kind=PATH_LENGTH):
    wp = np.asarray(waypoints, dtype=float)
    if len(wp) < 2:
        return 0.0
    seg = np.linalg.norm(np.diff(wp, axis=0), axis=1)
    return float(np.sum(seg**2) if cost_kind == SQUARED_LENGTH else np.sum(seg))


def _failed(status, n, **diag):
    return PlanResult(np.zeros((0, n)), [], float("inf"), status, diagnostics=diag)


# ---------------------------------------------------------------- lower bounds
def _set_distance(p, q):
    """Euclidean distance between two polytopes (0 when they intersect)."""
    if p.intersect(q).depth()[0] >= 0:
        return 0.0
    m = p.dim
    x, y = cp.Variable(m), cp.Variable(m)
    prob = cp.Problem(cp.Minimize(cp.sum_squares(x - y)), [p.A @ x <= p.b, q.A @ y <= q.b])
    prob.solve(solver=cp.CLARABEL)
    if prob.status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
        return 0.0  # a zero bound is always valid
    # a slightly low value keeps the bound valid under solver tolerance
    return max(0.0, float(np.linalg.norm(x.value - y.value)) - 1e-7)


def _point_distance(poly, y):
    x = closest_point(poly, y)
    return np.inf if x is None else max(0.0, float(np.linalg.norm(x - y)) - 1e-9)


def _state_graph(graph, starts, goals, q_s, q_t, squared):
    """Directed graph over traversed edges ``(u, v)``: "left u, entered v"."""
    power = 2 if squared else 1
    g = nx.DiGraph()
    for u, v, _ in graph.edges:
        g.add_node((u, v))
        g.add_node((v, u))
    for u in starts:
        for v in graph.adjacency[u]:
            g.add_edge("S", (u, v), w=_point_distance(graph.intersection(u, v), q_s) ** power)
    for v in goals:
        for u in graph.adjacency[v]:
            g.add_edge((u, v), "T", w=_point_distance(graph.intersection(u, v), q_t) ** power)
    for v, nbrs in graph.adjacency.items():
        for u in nbrs:
            for w in nbrs:
                if w != u:
                    g.add_edge((u, v), (v, w))

    def weight(a, b, data):
        if "w" in data:
            return data["w"]
        key = (a, b)
        cache = graph._dist_cache
        if key not in cache:
            d = _set_distance(graph.intersection(*a), graph.intersection(*b))
            cache[key] = cache[(b[::-1], a[::-1])] = d
        return cache[key] ** power

    return g, weight


def _simple_sequences(g, weight, max_expansions=200_000):
    """Yield ``(region_sequence, lower_bound)`` for S-T paths with distinct regions.

    Best-first search over partial paths. The heuristic is the exact
    remaining bound on the state graph without the distinct-region rule,
    which is consistent, so complete paths come out in nondecreasing bound
    order. Ties go to deeper partial paths, then to the smaller sequence.
    """
    rev = g.reverse(copy=False)
    h = nx.single_source_dijkstra_path_length(rev, "T", weight=lambda a, b, d: weight(b, a, d))
    heap = []
    tick = itertools.count()
    for state in sorted(s for s in g.successors("S") if s in h):
        gs = weight("S", state, g.edges["S", state])
        seq = state
        heapq.heappush(heap, (gs + h[state], -len(seq), seq, next(tick), gs, state))
    expanded = 0
    while heap and expanded < max_expansions:
        f, _, seq, _, gs, state = heapq.heappop(heap)
        if state == "T":
            yield list(seq), gs
            continue
        expanded += 1
        for nxt in g.successors(state):
            if nxt not in h:
                continue
            gn = gs + weight(state, nxt, g.edges[state, nxt])
            if nxt == "T":
                heapq.heappush(heap, (gn, -len(seq), seq, next(tick), gn, "T"))
            elif nxt[1] not in seq:
                sq = seq + (nxt[1],)
                heapq.heappush(heap, (gn + h[nxt], -len(sq), sq, next(tick), gn, nxt))
    if heap:
        log.warning("candidate enumeration stopped after %d expansions", expanded)


# ---------------------------------------------------------------- refinement
def _tightened(poly, margin=1e-8):
    depth = poly.depth()[0]
    return poly.b - min(margin, 0.5 * depth)


def refine(graph, region_path, q_s, q_t, cost_kind=PATH_LENGTH):
    """Optimal waypoints for a fixed region sequence.

    One free point per traversed intersection; segments between them stay in
    the shared region by convexity. Returns ``(waypoints, cost, info)`` or
    raises ``RuntimeError`` when the solver fails.
    """
    sets = [graph.intersection(a, b) for a, b in zip(region_path[:-1], region_path[1:])]
    m = len(q_s)
    if not sets:
        wp = np.vstack([q_s, q_t])
        return wp, path_cost(wp, cost_kind), {"solver_iterations": 0, "max_violation": 0.0}
    xs = cp.Variable((len(sets), m))
    rhs = [_tightened(p) for p in sets]
    cons = [p.A @ xs[k] <= r for k, (p, r) in enumerate(zip(sets, rhs))]
    pts = [q_s] + [xs[k] for k in range(len(sets))] + [q_t]
    segs = [pts[k + 1] - pts[k] for k in range(len(pts) - 1)]
    if cost_kind == SQUARED_LENGTH:
        obj = sum(cp.sum_squares(s) for s in segs)
    else:
        obj = sum(cp.norm(s, 2) for s in segs)
    prob = cp.Problem(cp.Minimize(obj), cons)
    prob.solve(solver=cp.CLARABEL)
    if prob.status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE) or xs.value is None:
        raise RuntimeError(f"refinement solver status {prob.status}")
    x = np.array(xs.value)
    # pull any waypoint the solver left marginally outside back in
    for k, (p, r) in enumerate(zip(sets, rhs)):
        if np.any(p.A @ x[k] > p.b):
            z = least_distance(-p.A, p.A @ x[k] - r)
            if z is None:
                raise RuntimeError("could not restore waypoint feasibility")
            x[k] = x[k] + z
    viol = max(float(np.max(p.A @ x[k] - p.b)) for k, p in enumerate(sets))
    wp = np.vstack([q_s, x, q_t])
    stats = prob.solver_stats
    info = {
        "solver_iterations": int(stats.num_iters or 0) if stats is not None else 0,
        "max_violation": max(viol, 0.0),
        "solver_status": prob.status,
    }
    return wp, path_cost(wp, cost_kind), info


def shortest_path(graph, query):
    """Plan from ``query.q_start`` to ``query.q_goal`` through the region graph.

    Endpoint and connectivity failures are reported in ``status``.
    """
    q_s, q_t = query.q_start, query.q_goal
    n = len(q_s)
    starts, goals = locate(graph, q_s), locate(graph, q_t)
    if not starts or not goals:
        return _failed(NO_REGION, n, start_regions=starts, goal_regions=goals)
    squared = query.cost_kind == SQUARED_LENGTH

    common = sorted(set(starts) & set(goals))
    if common:
        wp = np.vstack([q_s, q_t])
        return PlanResult(wp, [common[0]], path_cost(wp, query.cost_kind), OK,
                          diagnostics={"candidates": 1})

    g, weight = _state_graph(graph, starts, goals, q_s, q_t, squared)
    if "S" not in g or "T" not in g or not nx.has_path(g, "S", "T"):
        return _failed(DISCONNECTED, n, start_regions=starts, goal_regions=goals)

    best = None
    tried = []
    n_seq = 0
    for seq, lb in _simple_sequences(g, weight):
        if best is not None and lb >= best[1] - 1e-12:
            break  # bounds arrive in increasing order
        n_seq += 1
        try:
            wp, cost, info = refine(graph, seq, q_s, q_t, query.cost_kind)
        except (RuntimeError, cp.error.SolverError) as exc:
            log.debug("refinement of %s failed: %s", seq, exc)
            tried.append({"regions": seq, "lower_bound": lb, "error": str(exc)})
        else:
            tried.append({"regions": seq, "lower_bound": lb, "cost": cost, **info})
            if best is None or cost < best[1] - 1e-12 or (abs(cost - best[1]) <= 1e-12 and seq < best[2]):
                best = (wp, cost, seq)
        if n_seq >= query.max_discrete_paths:
            break
    if best is None:
        return _failed(DISCONNECTED, n, candidates=tried)
    wp, cost, seq = best
    diag = {"candidates": len(tried), "candidate_log": tried}
    return PlanResult(wp, seq, cost, OK, diagnostics=diag)


# ---------------------------------------------------------------- evaluation
def interpolate(waypoints, samples_per_segment):
    """Points at ``samples_per_segment`` evenly spaced parameters on every segment."""
    wp = np.asarray(waypoints, dtype=float)
    if len(wp) == 1:
        return wp.copy()
    s = np.linspace(0.0, 1.0, max(int(samples_per_segment), 2))
    segs = wp[:-1, None, :] + s[None, :, None] * np.diff(wp, axis=0)[:, None, :]
    return segs.reshape(-1, wp.shape[1])


def pdf_score(path, pdf, grid, samples_per_segment=100):
    """Smallest density value among the grid cells the path passes through."""
    wp = path.waypoints if isinstance(path, PlanResult) else path
    pts = interpolate(wp, samples_per_segment)
    if len(pts) == 0:
        return float("nan")
    vidx = np.unique(grid.value_to_virtual(pts), axis=0)
    return float(np.min(tt_eval(pdf, vidx)))


def path_in_safe_sets(path, graph, samples_per_segment=100, tol=1e-9):
    """Whether every interpolated point lies in some region of ``graph``."""
    wp = path.waypoints if isinstance(path, PlanResult) else path
    pts = interpolate(wp, samples_per_segment)
    inside = np.zeros(len(pts), dtype=bool)
    for r in graph.vertices:
        inside |= r.contains(pts, tol=tol)
        if inside.all():
            return True
    return bool(inside.all())
