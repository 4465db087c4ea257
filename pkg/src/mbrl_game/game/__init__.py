"""The four MBRL game solvers and their training logs."""

from .log import (
    CSV_COLUMNS,
    SCHEMA_VERSION,
    IterationRecord,
    TrainingLog,
    compare_solvers,
    compare_summaries,
    read_log_csv,
)
from .runner import SOLVERS, UPDATE_ORDERS, GameRunner, run_br, run_gda, run_mal, run_pal

__all__ = [
    "CSV_COLUMNS",
    "GameRunner",
    "IterationRecord",
    "SCHEMA_VERSION",
    "SOLVERS",
    "TrainingLog",
    "UPDATE_ORDERS",
    "compare_solvers",
    "compare_summaries",
    "read_log_csv",
    "run_br",
    "run_gda",
    "run_mal",
    "run_pal",
]
