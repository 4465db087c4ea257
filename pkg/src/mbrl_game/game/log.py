"""
Per-iteration training records.

The CSV form has a frozen column order and starts with a comment line
`# schema_version=<n> config_hash=<h>`; wall-clock time is kept out of it so
reruns of the same configuration produce byte-identical files.
"""

import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Iterable, Optional

import pandas as pd

SCHEMA_VERSION = 1


@dataclass
class IterationRecord:
    iteration: int
    solver: str
    cumulative_samples: int
    eval_return: float
    eval_return_se: float
    success_rate: float
    synthetic_return: float
    model_train_loss: float
    model_holdout_loss: float
    buffer_size: int
    npg_steps: int
    mean_kl: float
    explained_variance: float
    max_step_error: float
    cg_breakdowns: int
    diverged_trajectories: int
    model_retries: int
    perturbed: bool
    update_order: str
    model_update_seq: int
    policy_update_seq: int
    wall_clock: float = 0.0


CSV_COLUMNS = [f.name for f in fields(IterationRecord) if f.name != "wall_clock"]


class TrainingLog:
    """Ordered iteration records of one solver run."""

    def __init__(self, solver: str, seed: int, config_hash: str = ""):
        self.solver = solver
        self.seed = seed
        self.config_hash = config_hash
        self.records: list[IterationRecord] = []

    def __len__(self) -> int:
        return len(self.records)

    def append(self, record: IterationRecord) -> None:
        if self.records and record.cumulative_samples <= self.records[-1].cumulative_samples:
            raise ValueError(
                f"cumulative samples must increase: {record.cumulative_samples} after "
                f"{self.records[-1].cumulative_samples}"
            )
        if self.records and record.iteration != self.records[-1].iteration + 1:
            raise ValueError(f"iteration {record.iteration} does not follow {self.records[-1].iteration}")
        self.records.append(record)

    @property
    def last(self) -> IterationRecord:
        return self.records[-1]

    def to_frame(self, include_wall_clock: bool = False) -> pd.DataFrame:
        columns = CSV_COLUMNS + (["wall_clock"] if include_wall_clock else [])
        return pd.DataFrame([asdict(r) for r in self.records], columns=columns)

    def samples_to_success(self, threshold: float) -> Optional[int]:
        """Cumulative samples at the first record whose success rate reaches threshold."""
        for record in self.records:
            if record.success_rate >= threshold:
                return record.cumulative_samples
        return None

    def samples_to_recover(self, tolerance: float = 0.0) -> Optional[int]:
        """
        Real samples from the perturbation until eval_return is back within
        `tolerance` of the last unperturbed record.

        None when the run was never perturbed, was perturbed from its first
        record, or never recovered.
        """
        first = next((i for i, r in enumerate(self.records) if r.perturbed), None)
        if not first:
            return None
        baseline = self.records[first - 1]
        for record in self.records[first:]:
            if record.eval_return >= baseline.eval_return - tolerance:
                return record.cumulative_samples - baseline.cumulative_samples
        return None

    def summary(self, threshold: float) -> dict[str, Any]:
        last = self.last
        return {
            "solver": self.solver,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "iterations": len(self.records),
            "samples_to_success": self.samples_to_success(threshold),
            "perturbed": any(r.perturbed for r in self.records),
            "samples_to_recover": self.samples_to_recover(),
            "final_J": last.eval_return,
            "final_success_rate": last.success_rate,
            "final_model_loss": last.model_train_loss,
            "total_samples": last.cumulative_samples,
            "wall_clock": sum(r.wall_clock for r in self.records),
        }

    def write_csv(self, path: Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as f:
            f.write(f"# schema_version={SCHEMA_VERSION} config_hash={self.config_hash}\n")
            self.to_frame().to_csv(f, index=False)

    def write_summary(self, path: Path, threshold: float) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as f:
            json.dump(self.summary(threshold), f, indent=2, sort_keys=True)


def read_log_csv(path: Path) -> tuple[pd.DataFrame, dict[str, str]]:
    """Load a TrainingLog CSV and its header fields."""
    with open(path) as f:
        first = f.readline().strip()
    header = dict(item.split("=", 1) for item in first.lstrip("# ").split() if "=" in item)
    if int(header.get("schema_version", -1)) != SCHEMA_VERSION:
        raise ValueError(f"{path}: unsupported schema version {header.get('schema_version')}")
    return pd.read_csv(path, comment="#"), header


def compare_summaries(summaries: Iterable[dict[str, Any]]) -> pd.DataFrame:
    """
    Per-solver medians over seeds, one row per solver.

    A seed that never reaches the success threshold (or never recovers from
    its perturbation) counts as needing infinitely many samples. Unperturbed
    seeds are left out of the recovery median.
    """
    rows = []
    for s in summaries:
        success, recover = s["samples_to_success"], s.get("samples_to_recover")
        if not s.get("perturbed"):
            recover = math.nan
        rows.append({
            "solver": s["solver"],
            "seed": s["seed"],
            "samples_to_success": math.inf if success is None else success,
            "final_success_rate": s["final_success_rate"],
            "final_J": s["final_J"],
            "samples_to_recover": math.inf if recover is None else recover,
        })
    if not rows:
        raise ValueError("no runs to compare")
    return pd.DataFrame(rows).groupby("solver").agg(
        seeds=("seed", "count"),
        samples_to_success=("samples_to_success", "median"),
        final_success_rate=("final_success_rate", "median"),
        final_J=("final_J", "median"),
        samples_to_recover=("samples_to_recover", "median"),
    )


def compare_solvers(logs: Iterable[TrainingLog], threshold: float) -> pd.DataFrame:
    """compare_summaries over finished training logs."""
    return compare_summaries(log.summary(threshold) for log in logs)
