"""Experiment harness: corpus, oscillatory integrals, runners, reports and the CLI."""

from .report import ExperimentReport, Metric
from .runners import EXPERIMENTS, Setup, run_all

__all__ = ["EXPERIMENTS", "ExperimentReport", "Metric", "Setup", "run_all"]
