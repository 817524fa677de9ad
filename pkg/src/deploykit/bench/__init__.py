"""Desk-scale serving benchmark: synthetic packaged models, three execution configs, CSV and figures."""

from .models import MODELS, NativeModel, SyntheticModel, gen_models
from .report import Check, format_table, read_rows, report, run_checks
from .runner import CONFIGS, FIELDS, BenchConfig, BenchRow, run_bench

__all__ = [
    "BenchConfig",
    "BenchRow",
    "CONFIGS",
    "Check",
    "FIELDS",
    "MODELS",
    "NativeModel",
    "SyntheticModel",
    "format_table",
    "gen_models",
    "read_rows",
    "report",
    "run_bench",
    "run_checks",
]
