"""
How one-step model error compounds with rollout length.

Tabular chains: exact marginal TV against the linear bound eps * t.
Learned models: open-loop and closed-loop state discrepancy between the world
and the model from shared start states.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Optional

import numpy as np
import pandas as pd

from ..dynamics import DynamicsModel
from ..envs import Env, seed_list
from ..mdp import row_tv
from ..mdp.core import check_distribution
from ..policy import Policy
from .bounds import BoundReport, make_report

logger = logging.getLogger(__name__)

ProfileMode = Literal["open-loop", "closed-loop", "both"]
PROFILE_SCHEMA_VERSION = 1


@dataclass
class AmplificationProfile:
    """
    Per-horizon error series, index t = 0..T.

    Unused series are None; `truncated` flags a series cut short by model
    divergence (entries after the cut are NaN).
    """

    t: np.ndarray
    open_loop: Optional[np.ndarray] = None
    closed_loop: Optional[np.ndarray] = None
    marginal_tv: Optional[np.ndarray] = None
    bound: Optional[np.ndarray] = None
    truncated: bool = False

    def __post_init__(self):
        for name in ("open_loop", "closed_loop", "marginal_tv", "bound"):
            series = getattr(self, name)
            if series is not None and series.shape != self.t.shape:
                raise ValueError(f"{name} has shape {series.shape}, expected {self.t.shape}")

    def to_frame(self) -> pd.DataFrame:
        columns = {"t": self.t}
        for column, series in (
            ("L_open", self.open_loop), ("L_closed", self.closed_loop),
            ("marginal_tv", self.marginal_tv), ("bound", self.bound),
        ):
            if series is not None:
                columns[column] = series
        return pd.DataFrame(columns)

    def write_csv(self, path: Path, config_hash: str = "") -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as f:
            f.write(f"# schema_version={PROFILE_SCHEMA_VERSION} config_hash={config_hash} truncated={self.truncated}\n")
            self.to_frame().to_csv(f, index=False)


def check_error_amplification(
    P1: np.ndarray,
    P2: np.ndarray,
    rho: np.ndarray,
    horizon: int,
    bound_scale: float = 1.0,
) -> tuple[AmplificationProfile, BoundReport]:
    """
    Marginal divergence of two Markov chains from a shared start.

    eps is the worst expected one-step TV under the first chain's marginals
    for t <= horizon; the check asserts TV(P1^t, P2^t) <= eps * t at every t.
    The report's lhs and bound are taken at the t with the largest ratio.
    """
    P1, P2, rho = (np.asarray(x, dtype=np.float64) for x in (P1, P2, rho))
    if P1.shape != P2.shape or P1.ndim != 2 or P1.shape[0] != P1.shape[1]:
        raise ValueError(f"chains must be square and equal-shaped, got {P1.shape} and {P2.shape}")
    check_distribution("chain P1", P1)
    check_distribution("chain P2", P2)
    check_distribution("rho", rho)

    m1 = np.empty((horizon + 1, rho.size))
    m2 = np.empty_like(m1)
    m1[0] = m2[0] = rho
    for t in range(1, horizon + 1):
        m1[t] = m1[t - 1] @ P1
        m2[t] = m2[t - 1] @ P2

    marginal_tv = 0.5 * np.abs(m1 - m2).sum(axis=1)
    eps = float((m1 @ row_tv(P1, P2)).max())
    t = np.arange(horizon + 1)
    bound = bound_scale * eps * t

    ratios = np.where(bound > 0, marginal_tv / np.where(bound > 0, bound, 1.0), 0.0)
    worst = int(np.argmax(ratios))
    violations = np.flatnonzero(marginal_tv > bound + 1e-9)
    report = make_report(
        "error_amplification", float(marginal_tv[worst]), {"model_error": eps * worst}, bound_scale,
        details={"eps": eps, "t": worst, "horizon": horizon,
                 "first_violation_t": int(violations[0]) if violations.size else None},
    )
    if violations.size and report.holds:
        report.holds = False
        report.lhs = float(marginal_tv[violations[0]])
    profile = AmplificationProfile(t=t, marginal_tv=marginal_tv, bound=bound)
    return profile, report


def _decode(
    env: Env,
    model: DynamicsModel,
    states: np.ndarray,
    actions: np.ndarray,
    member: int,
    rng: np.random.Generator,
) -> np.ndarray:
    with np.errstate(over="ignore", invalid="ignore"):
        predicted = model.predict(states, env.clip_action(actions), member)
    bad = ~np.all(np.isfinite(predicted), axis=1)
    predicted[bad] = states[bad]
    decoded = env.decode_model_state(predicted, rng)
    decoded[bad] = np.nan
    return decoded


def _profile(
    env: Env,
    policy: Policy,
    model: DynamicsModel,
    closed_loop: bool,
    horizon: int,
    n_rollouts: int,
    seed: list[int],
) -> tuple[np.ndarray, bool]:
    coords = env.task_coordinates
    errors = np.zeros((model.n_members, horizon + 1))
    truncated = False
    for member in range(model.n_members):
        init_rng = np.random.default_rng([*seed, member, 0])
        # paired identical streams: world and model see the same policy and transition noise
        world_rng = np.random.default_rng([*seed, member, 1])
        decode_rng = np.random.default_rng([*seed, member, 1])
        world_policy_rng = np.random.default_rng([*seed, member, 2])
        model_policy_rng = np.random.default_rng([*seed, member, 2])

        s_world = env.sample_initial_states(n_rollouts, init_rng)
        s_model = s_world.copy()
        for t in range(1, horizon + 1):
            a_world = policy.sample(s_world, world_policy_rng)
            a_model = policy.sample(s_model, model_policy_rng) if closed_loop else a_world
            # the true next state, sampled by the same inverse-CDF rule as model predictions
            s_world = env.decode_model_state(env.expected_next_state(s_world, a_world), world_rng)
            s_model = _decode(env, model, s_model, a_model, member, decode_rng)
            if not np.all(np.isfinite(s_model)):
                truncated = True
                errors[member, t:] = np.nan
                break
            errors[member, t] = np.linalg.norm(s_world[:, coords] - s_model[:, coords], axis=1).mean()
    return errors.mean(axis=0), truncated


def amplification_profile(
    env: Env,
    policy: Policy,
    model: DynamicsModel,
    mode: ProfileMode = "both",
    horizon: int = 50,
    n_rollouts: int = 100,
    seed: int | list[int] = 0,
) -> AmplificationProfile:
    """
    Mean task-coordinate distance ||s_t^W - s_t^M|| over rollouts and members.

    Open loop replays the world's actions in the model; closed loop lets the
    policy act on model states, with the policy noise shared between the two.
    Both start from the same states, so L(0) = 0. A horizon beyond the env's
    is clamped.
    """
    if horizon > env.horizon:
        logger.warning(f"horizon {horizon} exceeds the {env.name} horizon; clamped to {env.horizon}")
        horizon = env.horizon
    base = seed_list(seed)

    profile = AmplificationProfile(t=np.arange(horizon + 1))
    if mode in ("open-loop", "both"):
        profile.open_loop, cut = _profile(env, policy, model, False, horizon, n_rollouts, base)
        profile.truncated |= cut
    if mode in ("closed-loop", "both"):
        profile.closed_loop, cut = _profile(env, policy, model, True, horizon, n_rollouts, base)
        profile.truncated |= cut
    if profile.truncated:
        logger.warning("model diverged during the amplification profile; series truncated")
    return profile
