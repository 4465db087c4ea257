"""
Configuration models and resolution.

Every section is a pydantic model with desk-scale defaults. A run's final
configuration is resolved from four layers, highest first:

    CLI override > config file > solver preset (PAL/MAL tables) > desk defaults

`resolve_config` is a pure function of its inputs; `config_hash` fingerprints
the result so every artifact can be traced back to it.
"""

import hashlib
import json
from pathlib import Path
from typing import Any, Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigError

SolverName = Literal["pal", "mal", "gda", "br"]
EnvName = Literal["gridworld-goal", "point-reacher", "pendulum"]
Profile = Literal["desk", "full"]

DEFAULT_HORIZONS: dict[str, int] = {
    "gridworld-goal": 30,
    "point-reacher": 100,
    "pendulum": 200,
}


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class EnvConfig(_Section):
    """World settings. Success thresholds live here, not in the env code."""

    name: EnvName = "gridworld-goal"
    horizon: Optional[int] = Field(default=None, ge=1)
    grid_size: int = Field(default=8, ge=2)
    slip: float = Field(default=0.1, ge=0.0, le=1.0)
    fixed_goal: Optional[tuple[int, int]] = None
    goal_region: Literal["default", "shifted"] = "default"
    dt: float = Field(default=0.05, gt=0.0)
    mass: float = Field(default=1.0, gt=0.0)
    success_distance: float = Field(default=0.05, gt=0.0)
    success_angle: float = Field(default=0.3, gt=0.0)

    @property
    def resolved_horizon(self) -> int:
        return self.horizon or DEFAULT_HORIZONS[self.name]


class PerturbationSchedule(_Section):
    """Mid-training change of the world, applied between iterations."""

    trigger_sample_count: int = Field(ge=0)
    kind: Literal["dynamics-shift", "goal-distribution-shift"]
    # None: the world's own default (gridworld slip x3, reacher and pendulum mass x1.5)
    magnitude: Optional[float] = Field(default=None, gt=0.0)


class NpgConfig(_Section):
    """Model-based NPG settings (defaults from the NPG hyperparameter table)."""

    gamma: float = Field(default=0.995, ge=0.0, lt=1.0)
    gae_lambda: float = Field(default=0.97, ge=0.0, le=1.0)
    n_traj: int = Field(default=200, ge=1)
    max_rollout_horizon: int = Field(default=500, ge=1)
    step_size: float = Field(default=0.05, ge=0.0)
    cg_iters: int = Field(default=10, ge=1)
    cg_damping: float = Field(default=1e-4, ge=0.0)
    intermediate_start_fraction: float = Field(default=0.5, ge=0.0, le=1.0)
    normalize_advantages: bool = True
    ensemble_mode: Literal["pool", "worst_case"] = "pool"
    policy_hidden: tuple[int, ...] = (32, 32)
    value_hidden: tuple[int, ...] = (64, 64)
    init_log_std: float = -1.0
    value_epochs: int = Field(default=2, ge=0)
    value_minibatch: int = Field(default=64, ge=1)
    value_lr: float = Field(default=1e-3, gt=0.0)


class ModelConfig(_Section):
    """Dynamics ensemble settings."""

    perfect: bool = False
    ensemble_size: int = Field(default=4, ge=1)
    hidden: tuple[int, ...] = (128, 128)
    minibatch: int = Field(default=200, ge=1)
    lr: float = Field(default=1e-3, gt=0.0)
    holdout_fraction: float = Field(default=0.1, ge=0.0, lt=1.0)
    min_steps: int = Field(default=100, ge=0)
    max_steps: int = Field(default=100_000, ge=1)
    update_mode: Literal["aggregate", "beta_step"] = "aggregate"
    beta_steps: int = Field(default=1, ge=1)
    beta_lr: float = Field(default=1e-4, gt=0.0)
    export_smoothing: float = Field(default=1e-3, gt=0.0, lt=1.0)


class GameConfig(_Section):
    """A complete, resolved run description."""

    solver: SolverName = "pal"
    profile: Profile = "desk"
    seed: int = 0
    budget: int = Field(default=30_000, ge=1)
    n_init: int = Field(default=2500, ge=1)
    samples_per_iter: Optional[int] = Field(default=None, ge=1)
    samples_factor: int = Field(default=5, ge=1)
    samples_cap: int = Field(default=1000, ge=1)
    buffer_mode: Literal["fifo", "aggregate", "fresh"] = "fifo"
    buffer_capacity: Optional[int] = Field(default=2500, ge=1)
    npg_steps: int = Field(default=4, ge=0)
    model_epochs: int = Field(default=100, ge=1)
    init_model_epochs: int = Field(default=100, ge=1)
    eval_episodes: int = Field(default=10, ge=1)
    success_threshold: float = Field(default=0.9, ge=0.0, le=1.0)
    max_model_retries: int = Field(default=2, ge=0)
    perturbation: Optional[PerturbationSchedule] = None
    env: EnvConfig = Field(default_factory=EnvConfig)
    npg: NpgConfig = Field(default_factory=NpgConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)

    @model_validator(mode="after")
    def _check_perturbation(self) -> "GameConfig":
        if (
            self.perturbation is not None
            and self.perturbation.kind == "goal-distribution-shift"
            and self.env.name == "pendulum"
        ):
            raise ValueError("pendulum has no goal distribution to shift")
        return self

    @property
    def samples_per_iteration(self) -> int:
        """N: explicit value or min(factor * env horizon, cap)."""
        if self.samples_per_iter is not None:
            return self.samples_per_iter
        return min(self.samples_factor * self.env.resolved_horizon, self.samples_cap)

    @property
    def leader(self) -> str:
        return {"pal": "policy", "mal": "model"}.get(self.solver, "none")


class SweepConfig(_Section):
    """Settings of a randomized certification sweep."""

    suite: Literal["lemma1", "lemma2", "lemma3", "theorem1", "all"] = "all"
    trials: int = Field(default=100, ge=1)
    seed: int = 0
    bound_scale: float = Field(default=1.0, gt=0.0)
    max_states: int = Field(default=20, ge=2, le=200)
    max_actions: int = Field(default=4, ge=1)
    horizon: int = Field(default=50, ge=1)

    @property
    def suites(self) -> list[str]:
        return ["lemma1", "lemma2", "lemma3", "theorem1"] if self.suite == "all" else [self.suite]


def validate_section(model: type[BaseModel], data: dict[str, Any]) -> Any:
    """Validate one config section, reporting the first bad field as a ConfigError."""
    try:
        return model.model_validate(data)
    except ValidationError as e:
        error = e.errors()[0]
        field = ".".join(str(part) for part in error["loc"])
        raise ConfigError(error["msg"], field=field) from e


SOLVER_PRESETS: dict[str, dict[str, Any]] = {
    # PAL table: small FIFO buffer, aggressive model, few NPG steps.
    "pal": {
        "n_init": 2500, "samples_factor": 5, "samples_cap": 1000,
        "buffer_mode": "fifo", "buffer_capacity": 2500,
        "npg_steps": 4, "model_epochs": 100, "init_model_epochs": 100,
    },
    # MAL table: aggregate everything, aggressive policy, few model epochs.
    "mal": {
        "n_init": 5000, "samples_factor": 20, "samples_cap": 3000,
        "buffer_mode": "aggregate", "buffer_capacity": None,
        "npg_steps": 25, "model_epochs": 10, "init_model_epochs": 100,
    },
    "gda": {
        "n_init": 2500, "samples_factor": 5, "samples_cap": 1000,
        "buffer_mode": "fresh", "buffer_capacity": None,
        "npg_steps": 1, "model_epochs": 1, "init_model_epochs": 100,
    },
    "br": {
        "n_init": 5000, "samples_factor": 20, "samples_cap": 3000,
        "buffer_mode": "fresh", "buffer_capacity": None,
        "npg_steps": 25, "model_epochs": 100, "init_model_epochs": 100,
    },
}

PROFILE_PRESETS: dict[str, dict[str, Any]] = {
    "desk": {},
    "full": {
        "npg": {"policy_hidden": (64, 64), "value_hidden": (128, 128)},
        "model": {"hidden": (512, 512)},
    },
}


def _deep_merge(base: dict[str, Any], update: dict[str, Any]) -> dict[str, Any]:
    merged = dict(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def _pick(layers: list[dict[str, Any]], key: str, default: Any) -> Any:
    for layer in layers:
        if layer.get(key) is not None:
            return layer[key]
    return default


def resolve_config(
    file_data: Optional[dict[str, Any]] = None,
    overrides: Optional[dict[str, Any]] = None,
) -> GameConfig:
    """
    Merge configuration layers into a validated GameConfig.

    Args:
        file_data: Parsed config file contents (nested sections allowed)
        overrides: CLI overrides in the same nested shape; None values are ignored

    Raises:
        ConfigError: naming the first invalid field
    """
    file_data = dict(file_data or {})
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}

    solver = _pick([overrides, file_data], "solver", "pal")
    profile = _pick([overrides, file_data], "profile", "desk")
    if solver not in SOLVER_PRESETS:
        raise ConfigError(f"unknown solver '{solver}', expected one of {sorted(SOLVER_PRESETS)}", field="solver")
    if profile not in PROFILE_PRESETS:
        raise ConfigError(f"unknown profile '{profile}'", field="profile")

    resolved: dict[str, Any] = {}
    for layer in (PROFILE_PRESETS[profile], SOLVER_PRESETS[solver], file_data, overrides):
        resolved = _deep_merge(resolved, layer)

    return validate_section(GameConfig, resolved)


def load_config_file(config_path: str | Path) -> dict[str, Any]:
    """
    Read a YAML or JSON config file into a plain dict.

    Raises:
        ConfigError: on missing file, unsupported suffix or parse errors (with line)
    """
    path = Path(config_path)
    if not path.exists():
        raise ConfigError(f"configuration file not found: {config_path}")

    try:
        if path.suffix.lower() == ".json":
            with open(path) as f:
                data = json.load(f)
        elif path.suffix.lower() in (".yaml", ".yml"):
            with open(path) as f:
                data = yaml.safe_load(f)
        else:
            raise ConfigError(f"unsupported configuration file format: {path.suffix}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"line {e.lineno}: {e.msg}", field=str(path)) from e
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        where = f"line {mark.line + 1}: " if mark is not None else ""
        raise ConfigError(f"{where}{e}", field=str(path)) from e

    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping of sections", field=str(path))
    return data


def config_hash(cfg: BaseModel) -> str:
    """Content hash of a resolved configuration (12 hex chars)."""
    canonical = json.dumps(cfg.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:12]
