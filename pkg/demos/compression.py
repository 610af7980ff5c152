"""How much the layout of the grid matters to a tensor train.

The same planar-arm density (128 bins per joint) is approximated twice: once
with one mode per joint, once with the whole grid reshaped into 7 modes of
size 8. Both runs see the same field; only the presentation differs.
"""

import time

import numpy as np

from tango import Grid, MetricConfig, density, parameter_count, planar_arm, tt_cross

arm = planar_arm()
metric = MetricConfig()
limits = [(-np.pi, np.pi)] * 3

print(f"{'layout':<12}{'modes':>8}{'params':>10}{'evals':>10}{'error':>11}{'seconds':>9}")
for label, reshape in (("per joint", None), ("flat 8**7", [8] * 7)):
    grid = Grid.uniform(limits, 128, reshape=reshape)
    t0 = time.perf_counter()
    res = tt_cross(density(arm, metric, grid), max_rank=30, tol=1e-3, seed=0)
    dt = time.perf_counter() - t0
    print(f"{label:<12}{len(grid.virtual_sizes):>8}{parameter_count(res.tt):>10,}"
          f"{res.n_evals:>10,}{res.heldout_error:>11.2e}{dt:>9.2f}")

print(f"\nfull table would hold {128 ** 3:,} values")
