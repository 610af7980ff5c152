"""Plan through hand-made safe regions and compare with a plain RRT.

A square workspace with a pillar in the middle is covered by three boxes
forming a U. The region planner bends around the pillar with a few
waypoints, while RRT wanders through free space. The resulting waypoints are
written as CSV tables next to this script's working directory.
"""

import csv

import numpy as np

from tango import BenchConfig, Polytope, PlanQuery, build_graph, rrt_plan, shortest_path

limits = Polytope.from_box([0, 0], [4, 4])
pillar = Polytope.from_box([1.5, 0], [2.5, 3])
regions = [
    Polytope.from_box([0, 0], [1.5, 4]),
    Polytope.from_box([0, 3], [4, 4]),
    Polytope.from_box([2.5, 0], [4, 4]),
]
q_s, q_t = np.array([0.5, 0.5]), np.array([3.5, 0.5])

graph = build_graph(regions)
plan = shortest_path(graph, PlanQuery(q_s, q_t))
print(f"region planner: {plan.status}, regions {plan.region_path}, "
      f"{len(plan.waypoints)} waypoints, length {plan.cost:.3f}")

cfg = BenchConfig(rrt_step=0.1, rrt_max_iters=20_000, rng_seed=1)
rrt = rrt_plan(q_s, q_t, [pillar], limits, cfg)
print(f"RRT:            {rrt.status}, {len(rrt.waypoints)} waypoints, length {rrt.cost:.3f}")

for name, res in (("region_plan.csv", plan), ("rrt_plan.csv", rrt)):
    with open(name, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "q0", "q1"])
        w.writerows([i, *p] for i, p in enumerate(res.waypoints.tolist()))
    print(f"wrote {name}")
