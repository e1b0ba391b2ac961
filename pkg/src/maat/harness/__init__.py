"""Simulation harness: synthetic populations, metrics, sessions, experiments."""

from .metrics import auc_informativeness, coverage_metric, mann_whitney_auc, see_metric
from .session import SessionResult, run_session
from .synthetic import SyntheticDataset, SyntheticSpec, generate_synthetic
from .experiment import ExperimentConfig, ExperimentReport, run_experiment

__all__ = [
    "auc_informativeness", "coverage_metric", "mann_whitney_auc", "see_metric",
    "SessionResult", "run_session",
    "SyntheticDataset", "SyntheticSpec", "generate_synthetic",
    "ExperimentConfig", "ExperimentReport", "run_experiment",
]
