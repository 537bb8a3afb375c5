"""Experiment orchestration: configs, presets, sweeps, reports and the CLI."""

from .config import ConfigError, ExperimentConfig
from .plotdata import EmptyReportError, emit_plot_data
from .presets import PRESETS, load_preset
from .runner import ExperimentReport, run_experiment

__all__ = [
    "ConfigError", "ExperimentConfig", "EmptyReportError", "emit_plot_data",
    "PRESETS", "load_preset", "ExperimentReport", "run_experiment",
]
