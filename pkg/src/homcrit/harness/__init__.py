"""Experiment harness: configuration, suites and report emission."""
from .config import ConfigError, ExperimentConfig, validate_config, load_config
from .results import ResultRow, ResultSet, Sweep, Table
from .report import emit_report, load_results
from .suites import SUITES, clear_cache, run_experiment

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "validate_config",
    "load_config",
    "ResultRow",
    "ResultSet",
    "Sweep",
    "Table",
    "emit_report",
    "load_results",
    "SUITES",
    "clear_cache",
    "run_experiment",
]
