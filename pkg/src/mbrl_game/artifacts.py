"""
Run directories, manifests and checkpoints.

A training run writes everything under `<output_root>/<solver>-<env>-<hash>/seed_<n>/`:

    log.csv            TrainingLog (schema header + frozen columns)
    summary.json       end-of-run summary
    manifest.json      RunManifest
    checkpoint/        policy, value baseline, ensemble members, run config
"""

import json
import logging
import os
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Optional, Union

from pydantic import BaseModel, Field

from . import __version__
from .config import GameConfig
from .dynamics import DynamicsEnsemble, PerfectModel
from .envs import Env, make_env
from .errors import CheckpointError
from .nn import save_mlp
from .policy import Policy, load_policy, save_policy

logger = logging.getLogger(__name__)

OUTPUT_ROOT_ENV = "MBRL_GAME_OUTPUT_ROOT"
DEFAULT_OUTPUT_ROOT = "./runs"


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


class RunManifest(BaseModel):
    """Everything needed to reproduce one run."""

    config: dict[str, Any]
    seed: int
    config_hash: str
    output_dir: str
    version: str = __version__
    started_at: str = Field(default_factory=utc_now)
    finished_at: Optional[str] = None
    status: str = "running"

    def write(self) -> Path:
        path = Path(self.output_dir) / "manifest.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as f:
            json.dump(self.model_dump(mode="json"), f, indent=2, sort_keys=True)
        return path


def output_root(explicit: Optional[str] = None) -> Path:
    """--out, then $MBRL_GAME_OUTPUT_ROOT, then ./runs."""
    return Path(explicit or os.getenv(OUTPUT_ROOT_ENV) or DEFAULT_OUTPUT_ROOT)


def run_directory(root: Path, cfg: GameConfig, digest: str) -> Path:
    return Path(root) / f"{cfg.solver}-{cfg.env.name}-{digest}" / f"seed_{cfg.seed}"


def save_checkpoint(
    directory: Path,
    cfg: GameConfig,
    policy: Policy,
    value: Any,
    model: Union[DynamicsEnsemble, PerfectModel],
    perturbed: bool = False,
) -> Path:
    """
    Write the final players next to the configuration that produced them.

    Args:
        directory: Run directory; the checkpoint goes into its `checkpoint/` child
        cfg: Resolved configuration (env name and settings are read back from it)
        policy: Policy player
        value: ValueNet baseline
        model: Model player; a PerfectModel is recorded by kind only
        perturbed: Whether the scheduled perturbation had been applied to the world

    Returns:
        The checkpoint directory
    """
    target = Path(directory) / "checkpoint"
    target.mkdir(parents=True, exist_ok=True)
    save_policy(target / "policy", policy)
    save_mlp(target / "value", value.net)
    kind = "perfect" if isinstance(model, PerfectModel) else "ensemble"
    if kind == "ensemble":
        model.save(target / "ensemble")
    with open(target / "run.json", "w") as f:
        record = {"env": cfg.env.name, "model": kind, "perturbed": perturbed, "config": cfg.model_dump(mode="json")}
        json.dump(record, f, indent=2, sort_keys=True)
    logger.debug(f"checkpoint written to {target}")
    return target


def load_checkpoint(directory: Union[str, Path]) -> tuple[Env, Policy, Union[DynamicsEnsemble, PerfectModel], GameConfig]:
    """
    Rebuild env, policy and model from a checkpoint directory.

    Accepts either the run directory or its `checkpoint/` child.

    Raises:
        CheckpointError: when the env record, policy or ensemble is missing
    """
    directory = Path(directory)
    if (directory / "checkpoint").is_dir():
        directory = directory / "checkpoint"
    run_file = directory / "run.json"
    if not run_file.exists():
        raise CheckpointError(f"{directory} has no run.json (env name and config)")
    with open(run_file) as f:
        record = json.load(f)

    cfg = GameConfig.model_validate(record["config"])
    env = make_env(record["env"], cfg.seed, cfg.env)
    if record.get("perturbed"):
        if cfg.perturbation is None:
            raise CheckpointError(f"{run_file} marks the world perturbed but its config has no perturbation")
        env = env.apply_perturbation(cfg.perturbation)
    policy = load_policy(directory / "policy")
    if record.get("model") == "perfect":
        model: Union[DynamicsEnsemble, PerfectModel] = PerfectModel(env)
    else:
        if not (directory / "ensemble").is_dir():
            raise CheckpointError(f"{directory} has no ensemble/ directory")
        model = DynamicsEnsemble.load(directory / "ensemble")
    spec = env.spec
    if policy.state_dim != spec.state_dim or model_dims(model) not in ((spec.state_dim, spec.action_dim), None):
        raise CheckpointError(f"checkpoint shapes do not match the {env.name} environment")
    return env, policy, model, cfg


def model_dims(model: Union[DynamicsEnsemble, PerfectModel]) -> Optional[tuple[int, int]]:
    if isinstance(model, DynamicsEnsemble):
        return model.state_dim, model.action_dim
    return None


def write_json(path: Path, payload: dict[str, Any]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True, default=float)
