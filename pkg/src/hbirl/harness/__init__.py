"""Experiment harness: configuration, orchestration, aggregation and the CLI."""
from .config import ExperimentConfig, config_from_dict, load_config
from .experiment import ResultRow, Scenario, build_scenario, learn, read_results, run_experiment, run_one, write_results
from .summary import SummaryRow, aggregate, emit_plot_data, mean_ci, read_plot_data

__all__ = [
    "ExperimentConfig", "config_from_dict", "load_config",
    "ResultRow", "Scenario", "build_scenario", "learn", "read_results", "run_experiment", "run_one", "write_results",
    "SummaryRow", "aggregate", "emit_plot_data", "mean_ci", "read_plot_data",
]
