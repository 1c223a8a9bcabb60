"""Scenario runner, metrics, checks and mode comparison."""

from .checks import CheckReport, CheckResult, check_result, check_run
from .metrics import RunMetrics, recount
from .runner import RunResult, run_scenario
from .scenario import ConfigError, Scenario, load_scenario, parse_scenario, shipped_scenarios

__all__ = [
    "CheckReport", "CheckResult", "ConfigError", "RunMetrics", "RunResult", "Scenario",
    "check_result", "check_run", "load_scenario", "parse_scenario", "recount", "run_scenario",
    "shipped_scenarios",
]
