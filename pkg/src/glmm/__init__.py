"""Graph Laplacian mixture models.

Joint clustering of graph signals and inference of one graph per
cluster by expectation-maximisation, with smooth-signal and heat-kernel
signal models, reference baselines, metrics and an experiment harness.
"""

from .em import FitConfig, FitError, FittedModel, GroupPrior, fit, predict
from .graph import Graph, KernelSpec, laplacian_from_weights, validate_laplacian
from .sampling import Dataset, MixtureModelSpec, derive_seed, make_rng, random_mixture_spec, sample_mixture
from .solvers import BACKEND

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "Dataset",
    "FitConfig",
    "FitError",
    "FittedModel",
    "Graph",
    "GroupPrior",
    "KernelSpec",
    "MixtureModelSpec",
    "derive_seed",
    "fit",
    "laplacian_from_weights",
    "make_rng",
    "predict",
    "random_mixture_spec",
    "sample_mixture",
    "validate_laplacian",
]
