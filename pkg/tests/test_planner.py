import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize

from tango.geometry import Polytope
from tango.planner import (
    DISCONNECTED,
    NO_REGION,
    OK,
    PATH_LENGTH,
    SQUARED_LENGTH,
    PlanQuery,
    PlanResult,
    build_graph,
    interpolate,
    locate,
    path_in_safe_sets,
    pdf_score,
    refine,
    shortest_path,
)
from tango.grid import Grid
from tango.tensor_train import TensorTrain, tt_constant, tt_from_dense, tt_scale_shift


def box(lo, hi):
    return Polytope.from_box(lo, hi)


TWO_BOXES = [box([0, 0], [1.1, 1]), box([0.9, 0], [2, 1])]
L_SHAPE = [box([0, 0], [1, 3]), box([0, 0], [3, 1])]


def test_graph_examples():
    g = build_graph(TWO_BOXES)
    assert len(g.edges) == 1
    assert g.intersection(1, 0).contains([1.0, 0.5])
    assert len(build_graph([box([0, 0], [1, 1]), box([2, 0], [3, 1])]).edges) == 0
    chain = build_graph([box([0, 0], [1, 1]), box([0.8, 0], [2, 1]), box([1.8, 0], [3, 1])])
    assert [(u, v) for u, v, _ in chain.edges] == [(0, 1), (1, 2)]


def test_touching_boxes_are_not_connected():
    assert len(build_graph([box([0, 0], [1, 1]), box([1, 0], [2, 1])]).edges) == 0


def test_locate():
    g = build_graph(TWO_BOXES)
    assert locate(g, [0.5, 0.5]) == [0]
    assert locate(g, [1.0, 0.5]) == [0, 1]
    assert locate(g, [5.0, 5.0]) == []


def test_two_boxes_straight_line():
    res = shortest_path(build_graph(TWO_BOXES), PlanQuery([0.1, 0.5], [1.9, 0.5]))
    assert res.status == OK
    assert res.cost == pytest.approx(1.8, abs=1e-6)
    assert res.region_path == [0, 1]
    mid = res.waypoints[1]
    assert 0.9 <= mid[0] <= 1.1 and mid[1] == pytest.approx(0.5, abs=1e-6)


def test_l_shape_bends_at_corner():
    res = shortest_path(build_graph(L_SHAPE), PlanQuery([0.5, 2.5], [2.5, 0.5]))
    assert res.cost == pytest.approx(2 * np.sqrt(2.5), abs=1e-6)
    np.testing.assert_allclose(res.waypoints[1], [1.0, 1.0], atol=1e-5)


def test_same_region_straight_line():
    g = build_graph(TWO_BOXES)
    for kind, expect in ((PATH_LENGTH, 0.5), (SQUARED_LENGTH, 0.25)):
        res = shortest_path(g, PlanQuery([0.1, 0.2], [0.4, 0.6], cost_kind=kind))
        assert len(res.waypoints) == 2 and res.cost == pytest.approx(expect)


def test_failure_statuses():
    g = build_graph([box([0, 0], [1, 1]), box([2, 0], [3, 1])])
    res = shortest_path(g, PlanQuery([0.5, 0.5], [2.5, 0.5]))
    assert res.status == DISCONNECTED and len(res.waypoints) == 0 and not res.ok
    res = shortest_path(g, PlanQuery([0.5, 0.5], [5, 5]))
    assert res.status == NO_REGION


def test_query_validation():
    with pytest.raises(ValueError):
        PlanQuery([0, 0], [1, 1], cost_kind="time")
    with pytest.raises(ValueError):
        PlanQuery([0, 0], [1, 1], max_discrete_paths=0)
    with pytest.raises(ValueError):
        PlanQuery([0, np.nan], [1, 1])


def test_result_dict_roundtrip():
    res = shortest_path(build_graph(TWO_BOXES), PlanQuery([0.1, 0.5], [1.9, 0.5]))
    again = PlanResult.from_dict(res.to_dict())
    np.testing.assert_array_equal(again.waypoints, res.waypoints)
    assert again.cost == res.cost and again.region_path == res.region_path


# ------------------------------------------------------------ random layouts
# layouts whose random query needs at least two regions
MULTI_REGION_SEEDS = [0, 4, 6, 7, 10, 19, 23, 25]


def random_layout(seed, n=9):
    """Boxes scattered over a 4x4 square; many overlap."""
    rng = np.random.default_rng(seed)
    lo = rng.uniform(0, 3, size=(n, 2))
    return [box(l, l + rng.uniform(0.6, 1.6, 2)) for l in lo]


def random_query(graph, seed):
    rng = np.random.default_rng(seed + 1000)
    pts = []
    while len(pts) < 2:
        q = rng.uniform(0, 4.6, 2)
        if locate(graph, q):
            pts.append(q)
    return pts


def box_bounds(poly):
    lo, hi = poly.bounding_box()
    return list(zip(lo, hi))


def reference_sequence_cost(graph, seq, q_s, q_t, squared):
    """Minimize over waypoints in the (box) intersections with a bound-constrained quasi-Newton solve."""
    sets = [graph.intersection(a, b) for a, b in zip(seq[:-1], seq[1:])]
    bounds = [bd for p in sets for bd in box_bounds(p)]
    x0 = np.concatenate([np.mean(p.bounding_box(), axis=0) for p in sets])

    def cost(x):
        pts = np.vstack([q_s, x.reshape(-1, 2), q_t])
        d = np.diff(pts, axis=0)
        sq = (d**2).sum(1)
        return sq.sum() if squared else np.sqrt(sq + 1e-14).sum()

    res = minimize(cost, x0, bounds=bounds, method="L-BFGS-B", options={"ftol": 1e-14, "gtol": 1e-10})
    return res.fun


@pytest.mark.parametrize("seed", MULTI_REGION_SEEDS)
@pytest.mark.parametrize("kind", [PATH_LENGTH, SQUARED_LENGTH])
def test_refinement_matches_reference(seed, kind):
    g = build_graph(random_layout(seed))
    q_s, q_t = random_query(g, seed)
    res = shortest_path(g, PlanQuery(q_s, q_t, cost_kind=kind))
    assert res.ok and len(res.region_path) >= 2
    ref = reference_sequence_cost(g, res.region_path, q_s, q_t, kind == SQUARED_LENGTH)
    assert res.cost == pytest.approx(ref, abs=1e-5)


@pytest.mark.parametrize("seed", MULTI_REGION_SEEDS)
def test_lower_bounds_are_sound(seed):
    g = build_graph(random_layout(seed))
    q_s, q_t = random_query(g, seed)
    res = shortest_path(g, PlanQuery(q_s, q_t, max_discrete_paths=10))
    for cand in res.diagnostics.get("candidate_log", []):
        if "cost" in cand:
            assert cand["lower_bound"] <= cand["cost"] + 1e-7


@pytest.mark.parametrize("seed", MULTI_REGION_SEEDS)
def test_cost_monotone_in_candidates(seed):
    g = build_graph(random_layout(seed))
    q_s, q_t = random_query(g, seed)
    costs = [shortest_path(g, PlanQuery(q_s, q_t, max_discrete_paths=k)).cost for k in (1, 3, 20)]
    assert costs[0] >= costs[1] - 1e-9 and costs[1] >= costs[2] - 1e-9


@pytest.mark.parametrize("seed", MULTI_REGION_SEEDS)
def test_ok_plans_stay_in_safe_sets(seed):
    g = build_graph(random_layout(seed))
    q_s, q_t = random_query(g, seed)
    res = shortest_path(g, PlanQuery(q_s, q_t))
    assert res.ok
    assert path_in_safe_sets(res, g, 10) and path_in_safe_sets(res, g, 1000)
    # each segment has both ends in the region it traverses
    for k, v in enumerate(res.region_path):
        assert g.vertices[v].contains(res.waypoints[k]) and g.vertices[v].contains(res.waypoints[k + 1])
    assert res.cost == pytest.approx(np.linalg.norm(np.diff(res.waypoints, axis=0), axis=1).sum())


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_disconnected_layouts(seed):
    g = build_graph(random_layout(seed))
    q_s, q_t = random_query(g, seed)
    assert shortest_path(g, PlanQuery(q_s, q_t)).status == DISCONNECTED


def test_candidates_use_distinct_regions():
    g = build_graph(random_layout(4))
    q_s, q_t = random_query(g, 4)
    res = shortest_path(g, PlanQuery(q_s, q_t))
    bounds = [c["lower_bound"] for c in res.diagnostics["candidate_log"]]
    assert bounds == sorted(bounds)
    for cand in res.diagnostics["candidate_log"]:
        assert len(set(cand["regions"])) == len(cand["regions"])


@settings(max_examples=20)
@given(st.lists(st.floats(0.05, 0.95), min_size=4, max_size=4))
def test_squared_and_length_agree_in_one_region(c):
    g = build_graph([box([0, 0], [1, 1])])
    a = shortest_path(g, PlanQuery(c[:2], c[2:], cost_kind=PATH_LENGTH))
    b = shortest_path(g, PlanQuery(c[:2], c[2:], cost_kind=SQUARED_LENGTH))
    np.testing.assert_array_equal(a.waypoints, b.waypoints)
    assert b.cost == pytest.approx(a.cost**2, rel=1e-12, abs=1e-15)


def test_refine_without_intersections():
    g = build_graph(TWO_BOXES)
    wp, cost, info = refine(g, [0], np.array([0.1, 0.1]), np.array([0.2, 0.1]))
    assert len(wp) == 2 and cost == pytest.approx(0.1)


# ------------------------------------------------------------ evaluation
GRID = Grid.uniform([[0, 4], [0, 4]], 4)


def test_pdf_score_constant():
    pdf = tt_scale_shift(tt_constant([4, 4]), 0.37, 0.0)
    path = np.array([[0.2, 0.2], [3.8, 3.1]])
    assert pdf_score(path, pdf, GRID) == pytest.approx(0.37)


def test_pdf_score_crossing_low_cell():
    dense = np.full((4, 4), 0.9)
    dense[2, 1] = 0.05
    pdf = tt_from_dense(dense)
    crossing = np.array([[0.5, 1.5], [3.5, 1.5]])
    assert pdf_score(crossing, pdf, GRID) == pytest.approx(0.05, abs=1e-12)
    avoiding = np.array([[0.5, 2.5], [3.5, 2.5]])
    assert pdf_score(avoiding, pdf, GRID) == pytest.approx(0.9, abs=1e-12)


def test_pdf_score_zero_length():
    dense = np.arange(16, dtype=float).reshape(4, 4) / 16
    pdf = tt_from_dense(dense)
    assert pdf_score(np.array([[2.5, 1.5], [2.5, 1.5]]), pdf, GRID) == pytest.approx(dense[2, 1])


def test_safe_set_checks():
    g = build_graph(L_SHAPE)
    outside = np.array([[0.5, 2.5], [2.5, 2.5]])
    assert not path_in_safe_sets(outside, g, 100)
    assert path_in_safe_sets(np.array([[0.5, 0.5], [0.5, 0.5]]), g, 100)
    # cuts the inner corner of the L
    corner = np.array([[0.5, 2.5], [2.5, 0.5]])
    assert not path_in_safe_sets(corner, g, 1000)


def test_interpolate_includes_waypoints():
    wp = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 2.0]])
    pts = interpolate(wp, 5)
    assert len(pts) == 10
    for w in wp:
        assert np.any(np.all(np.isclose(pts, w), axis=1))
