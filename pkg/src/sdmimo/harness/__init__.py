"""Experiment configuration, Monte-Carlo runner, metrics and CLI."""
from .config import ExperimentConfig, builtin_recipes, load_config
from .metrics import metric_angle_error, metric_nmse, nmse_db
from .runner import TrialRecord, aggregate, run_experiment, run_trials

__all__ = [
    "ExperimentConfig",
    "TrialRecord",
    "aggregate",
    "builtin_recipes",
    "load_config",
    "metric_angle_error",
    "metric_nmse",
    "nmse_db",
    "run_experiment",
    "run_trials",
]
