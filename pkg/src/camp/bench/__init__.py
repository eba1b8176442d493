"""Experiment harness: configuration, threshold search, sweeps, CLI."""

from camp.bench.config import SweepConfig, load_config, parse_config
from camp.bench.sweep import SweepResult, TrialReport, emit_plot_data, run_sweep, threshold_search

__all__ = ["SweepConfig", "SweepResult", "TrialReport", "emit_plot_data", "load_config", "parse_config",
           "run_sweep", "threshold_search"]
