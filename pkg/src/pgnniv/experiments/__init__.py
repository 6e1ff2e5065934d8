"""Experiment definitions, runner, metric suite and acceptance checks."""

from .checks import CheckResult, run_checks
from .configs import REGISTRY, ExperimentConfig, get_config
from .metrics import (compare_runs, l2_error, moving_average, pen_curve, relative_error_stats,
                      rmse_curve)
from .runner import Report, RunRecord, load_report, rebuild_tables, run_experiment, write_report

__all__ = [
    "CheckResult", "run_checks", "REGISTRY", "ExperimentConfig", "get_config", "compare_runs",
    "l2_error", "moving_average", "pen_curve", "relative_error_stats", "rmse_curve", "Report",
    "RunRecord", "load_report", "rebuild_tables", "run_experiment", "write_report",
]
