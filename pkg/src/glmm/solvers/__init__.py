from ._backend import BACKEND
from .common import ConvergenceWarning, GraphEstimate, WeightedSignals, edge_index
from .heat import (
    HeatProblem,
    HeatSolverParams,
    heat_matching_objective,
    learn_graph_heat,
    matrix_log_psd,
    weighted_sample_covariance,
)
from .smooth import (
    SmoothSolverParams,
    learn_graph_smooth,
    pairwise_distance_matrix,
    smooth_objective,
)

__all__ = [
    "BACKEND",
    "ConvergenceWarning",
    "GraphEstimate",
    "HeatProblem",
    "HeatSolverParams",
    "SmoothSolverParams",
    "WeightedSignals",
    "edge_index",
    "heat_matching_objective",
    "learn_graph_heat",
    "learn_graph_smooth",
    "matrix_log_psd",
    "pairwise_distance_matrix",
    "smooth_objective",
    "weighted_sample_covariance",
]
