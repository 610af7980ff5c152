"""Density-guided motion planning: tensor-train compressed configuration-space
densities, convex safe regions and shortest paths through their overlaps."""

from .tensor_train import (
    TensorTrain,
    parameter_count,
    tt_add,
    tt_constant,
    tt_eval,
    tt_from_dense,
    tt_round,
    tt_scale_shift,
)
from .cross import BlackBoxField, EvaluationError, tt_cross
from .sampling import tt_sample
from .grid import Grid
from .kinematics import MetricConfig, density, jacobian, forward_kinematics, panda, planar_arm, riemannian_index, yoshikawa
from .geometry import Ellipsoid, Polytope
from .clustering import cluster_to_polytope, rnn_dbscan
from .iris import iris, iris_batch, prune
from .planner import PlanQuery, PlanResult, RegionGraph, build_graph, locate, path_in_safe_sets, pdf_score, shortest_path
from .bench import BenchConfig, BenchRecord, rrt_plan, run_benchmark

__version__ = "0.1.0"
