"""Thresholding graph bandits: graph-regularized superlevel-set identification."""

from .env import ProblemInstance, RewardStream, error_rate, loss, superlevel_set
from .graph import (
    LaplacianOperator,
    WeightedGraph,
    gen_cliques,
    gen_sbm,
    gen_small_world,
    laplacian,
    largest_connected_component,
    load_edge_list,
    load_labels,
    smooth_signal,
)
from .policies import APT, GrAPL, NonAdaptive, OraclePolicy, oracle_allocation, oracle_schedule
from .solver import DiagVarianceTracker, EstimatorState, solve_cg

__version__ = "0.1.0"
