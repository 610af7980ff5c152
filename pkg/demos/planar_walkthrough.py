"""Walk the planar 3-link arm through the whole preprocessing chain.

Run with ``python demos/planar_walkthrough.py [out_dir]``. Every stage writes
its artifacts into ``out_dir`` (a temporary directory by default), so the
same files can afterwards be inspected or fed to the ``tango`` command.
"""

import json
import sys
import tempfile
from importlib.resources import files

import networkx as nx
import numpy as np

from tango import locate, pipeline

cfg = pipeline.PipelineConfig.load(str(files("tango") / "configs" / "planar3.yaml"))
out = sys.argv[1] if len(sys.argv) > 1 else tempfile.mkdtemp(prefix="tango_planar_")
print(f"artifacts go to {out}\n")

# 1. The density over joint space is never tabulated: 128**3 cells are
#    presented as a 7-mode tensor of size 8 and learned from samples.
rep = pipeline.approximate(cfg, out)
grid = cfg.grid()
print("density approximation")
print(f"  grid cells        {np.prod(grid.bins):,}")
print(f"  TT parameters     {rep['parameter_count']:,}  (ranks {rep['ranks']})")
print(f"  field evaluations {rep['n_evaluations']:,}")
print(f"  held-out error    {rep['heldout_relative_error']:.2e}\n")

# 2. Draw configurations from the density and from its complement. The best
#    feasible draws seed safe regions, the worst become obstacle points.
s = pipeline.sample(cfg, out)
print("sampling")
for key in ("feasible", "feasible_best", "obstacle", "obstacle_best"):
    print(f"  {key:<14} {len(s[key]['q']):>6}")
print()

# 3. Obstacle points are clustered and hulled; safe regions grow around seeds.
r = pipeline.regions(cfg, out)
d = r["diagnostics"]
print("safe regions")
print(f"  obstacle polytopes {d['obstacles']}")
print(f"  regions            {d['regions_before_prune']} grown, {d['regions_after_prune']} kept\n")

# 4. Plan between two seeds in different regions that the overlap graph
#    connects (the largest connected group of regions).
graph, loaded = pipeline.region_graph(out)
seeds = np.asarray(s["feasible_best"]["q"])
nx_graph = nx.Graph(graph.adjacency)
group = max(nx.connected_components(nx_graph), key=len)
print(f"  overlap edges      {len(graph.edges)}, largest connected group {sorted(group)}\n")
home = [r for r in (locate(graph, q) for q in seeds)]
i = next(k for k, h in enumerate(home) if h and h[0] in group)
j = next(k for k, h in enumerate(home) if h and h[0] in group and not set(h) & set(home[i]))
start, goal = seeds[i], seeds[j]
res = pipeline.plan(cfg, out, start, goal)
print("plan")
print(f"  status      {res.status}")
if res.ok:
    print(f"  regions     {res.region_path}")
    print(f"  waypoints   {len(res.waypoints)}")
    print(f"  cost        {res.cost:.4f}")
    print(f"  pdf score   {res.pdf_score:.4f}")

with open(f"{out}/plan.json") as fh:
    print(f"\nplan.json keys: {sorted(json.load(fh))}")
