"""Experiment orchestration and the command-line interface."""

from .experiments import (
    CSV_COLUMNS,
    SCENARIOS,
    ExperimentConfig,
    ExperimentResult,
    grid_search,
    load_hyperparameters,
    run_experiment,
)
from .pipeline import METHODS, evaluate_model, fit_method, predict_model

__all__ = [
    "CSV_COLUMNS",
    "METHODS",
    "SCENARIOS",
    "ExperimentConfig",
    "ExperimentResult",
    "evaluate_model",
    "fit_method",
    "grid_search",
    "load_hyperparameters",
    "predict_model",
    "run_experiment",
]
