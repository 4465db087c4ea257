"""
Model-based natural policy gradient.

One `npg_iteration` rolls the policy out in every ensemble member, computes
GAE advantages against the value baseline, forms the vanilla gradient, solves
(F + damping I) x = g by conjugate gradient and takes the normalized step

    theta <- theta + sqrt(delta / x^T (F + damping I) x) * x

before refitting the baseline on the fresh returns.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ..config import NpgConfig
from ..dynamics import DynamicsModel, ReplayBuffer
from ..envs import Env, Trajectory
from ..nn import adam_step
from .policies import Policy, ValueNet

logger = logging.getLogger(__name__)

GRAD_EPS = 1e-12
DIVERGENCE_LIMIT = 1e6

FisherProduct = Callable[[np.ndarray], np.ndarray]


@dataclass
class SyntheticBatch:
    """
    Padded model rollouts, shape (M, H, ...) with a validity mask.

    `members[i]` is the ensemble member that produced trajectory i and
    `diverged[i]` flags a trajectory cut short by a non-finite prediction.
    """

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    dones: np.ndarray
    mask: np.ndarray
    members: np.ndarray
    diverged: np.ndarray

    @property
    def n_trajectories(self) -> int:
        return self.rewards.shape[0]

    @property
    def n_samples(self) -> int:
        return int(self.mask.sum())

    def valid(self, array: np.ndarray) -> np.ndarray:
        """Flatten the valid steps of a (M, H, ...) array."""
        return array[self.mask]

    def discounted_returns(self, gamma: float) -> np.ndarray:
        discounts = gamma ** np.arange(self.rewards.shape[1])
        return np.sum(self.rewards * self.mask * discounts, axis=1)

    def select(self, rows: np.ndarray) -> "SyntheticBatch":
        return SyntheticBatch(**{name: getattr(self, name)[rows] for name in self.__dataclass_fields__})

    def trajectories(self) -> list[Trajectory]:
        out = []
        for i in range(self.n_trajectories):
            m = self.mask[i]
            out.append(Trajectory(
                self.states[i][m], self.actions[i][m], self.rewards[i][m],
                self.next_states[i][m], self.dones[i][m], diverged=bool(self.diverged[i]),
                info={"member": int(self.members[i])},
            ))
        return out

    @classmethod
    def from_trajectories(cls, trajectories: list[Trajectory], members: Optional[list[int]] = None) -> "SyntheticBatch":
        """Pad variable-length trajectories into one batch."""
        m, h = len(trajectories), max(len(tr) for tr in trajectories)
        ds, da = trajectories[0].states.shape[1], trajectories[0].actions.shape[1]
        batch = cls(
            states=np.zeros((m, h, ds)), actions=np.zeros((m, h, da)), rewards=np.zeros((m, h)),
            next_states=np.zeros((m, h, ds)), dones=np.zeros((m, h), dtype=bool),
            mask=np.zeros((m, h), dtype=bool),
            members=np.asarray(members if members is not None else [0] * m),
            diverged=np.array([tr.diverged for tr in trajectories]),
        )
        for i, tr in enumerate(trajectories):
            n = len(tr)
            batch.states[i, :n], batch.actions[i, :n] = tr.states, tr.actions
            batch.rewards[i, :n], batch.next_states[i, :n] = tr.rewards, tr.next_states
            batch.dones[i, :n], batch.mask[i, :n] = tr.dones, True
        return batch


def rollout_horizon(env: Env, cfg: NpgConfig) -> int:
    return min(env.horizon, cfg.max_rollout_horizon)


def initial_states(
    env: Env,
    buffer: Optional[ReplayBuffer],
    cfg: NpgConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """Start states: a fraction from real intermediate states, the rest from rho."""
    n_mid = 0
    if buffer is not None and len(buffer) > 0:
        n_mid = int(round(cfg.intermediate_start_fraction * cfg.n_traj))
    starts = env.sample_initial_states(cfg.n_traj - n_mid, rng)
    if n_mid:
        starts = np.concatenate([starts, buffer.sample_states(n_mid, rng)])
    return starts


def synthetic_rollouts(
    policy: Policy,
    model: DynamicsModel,
    env: Env,
    starts: np.ndarray,
    cfg: NpgConfig,
    rng: np.random.Generator,
) -> SyntheticBatch:
    """
    Roll every start state out under every model member.

    Rewards and termination come from the env oracle. A trajectory whose
    prediction turns non-finite (or leaves a sane range) is truncated at that
    step and flagged as diverged.
    """
    horizon = rollout_horizon(env, cfg)
    n, k = starts.shape[0], model.n_members
    m = n * k
    ds, da = env.state_dim, env.action_dim

    batch = SyntheticBatch(
        states=np.zeros((m, horizon, ds)), actions=np.zeros((m, horizon, da)),
        rewards=np.zeros((m, horizon)), next_states=np.zeros((m, horizon, ds)),
        dones=np.zeros((m, horizon), dtype=bool), mask=np.zeros((m, horizon), dtype=bool),
        members=np.repeat(np.arange(k), n), diverged=np.zeros(m, dtype=bool),
    )

    for member in range(k):
        rows = slice(member * n, (member + 1) * n)
        s = starts.copy()
        alive = np.ones(n, dtype=bool)
        for t in range(horizon):
            if not alive.any():
                break
            a = policy.sample(s, rng)
            with np.errstate(over="ignore", invalid="ignore"):
                predicted = model.predict(s, env.clip_action(a), member)
            bad = ~np.all(np.isfinite(predicted), axis=1) | np.any(np.abs(predicted) > DIVERGENCE_LIMIT, axis=1)
            predicted[bad] = s[bad]
            s_next = env.decode_model_state(predicted, rng)
            newly_bad = bad & alive
            batch.diverged[rows] |= newly_bad
            alive &= ~bad

            batch.states[rows, t] = s
            batch.actions[rows, t] = a
            batch.rewards[rows, t] = env.reward(s, a, s_next)
            batch.next_states[rows, t] = s_next
            done = env.terminal(s_next)
            batch.dones[rows, t] = done
            batch.mask[rows, t] = alive
            alive &= ~done
            s = s_next

    n_diverged = int(batch.diverged.sum())
    if n_diverged:
        logger.warning(f"{n_diverged} of {m} synthetic trajectories diverged and were truncated")
    return batch


def gae_advantages(
    batch: SyntheticBatch,
    value_fn: Callable[[np.ndarray], np.ndarray],
    gamma: float,
    lam: float,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Generalized advantage estimates by backward recursion.

    Returns:
        (advantages, value targets), both (M, H) and zero on invalid steps
    """
    m, h = batch.rewards.shape
    values = value_fn(batch.states.reshape(m * h, -1)).reshape(m, h)
    next_values = value_fn(batch.next_states.reshape(m * h, -1)).reshape(m, h)
    not_done = 1.0 - batch.dones.astype(np.float64)

    deltas = batch.rewards + gamma * next_values * not_done - values
    advantages = np.zeros((m, h))
    carry = np.zeros(m)
    for t in reversed(range(h)):
        carry = deltas[:, t] + gamma * lam * not_done[:, t] * carry
        carry = np.where(batch.mask[:, t], carry, 0.0)
        advantages[:, t] = carry
    targets = np.where(batch.mask, advantages + values, 0.0)
    return advantages, targets


def standardize(advantages: np.ndarray) -> np.ndarray:
    centered = advantages - advantages.mean()
    std = centered.std()
    return centered / std if std > GRAD_EPS else centered


def policy_gradient(
    states: np.ndarray,
    actions: np.ndarray,
    advantages: np.ndarray,
    policy: Policy,
    normalize: bool = True,
) -> np.ndarray:
    """g = mean_i grad log pi(a_i | s_i) * A_i over aligned flat samples."""
    if states.shape[0] != advantages.shape[0]:
        raise ValueError(f"{states.shape[0]} states but {advantages.shape[0]} advantages")
    weights = standardize(advantages) if normalize else advantages
    g = policy.score(states, actions, weights) / states.shape[0]
    if not np.all(np.isfinite(g)):
        raise FloatingPointError("non-finite policy gradient")
    return g


def fisher_vector_product(
    policy: Policy,
    states: np.ndarray,
    v: np.ndarray,
    damping: float,
    cache: Optional[list] = None,
) -> np.ndarray:
    """(F + damping I) v with F the state-averaged policy Fisher."""
    return policy.fisher_vector_product(states, v, cache) + damping * v


def conjugate_gradient(
    fvp: FisherProduct,
    b: np.ndarray,
    iterations: int = 10,
    residual_tol: float = 1e-10,
) -> tuple[np.ndarray, bool]:
    """
    Approximately solve A x = b for symmetric positive-definite A.

    Returns:
        (x, breakdown) where breakdown flags non-positive curvature
    """
    x = np.zeros_like(b)
    r = b.copy()
    p = b.copy()
    rr = r @ r
    for _ in range(iterations):
        if rr < residual_tol:
            break
        Ap = fvp(p)
        curvature = p @ Ap
        if not np.isfinite(curvature) or curvature <= 0.0:
            return x, True
        alpha = rr / curvature
        x += alpha * p
        r -= alpha * Ap
        rr_new = r @ r
        p = r + (rr_new / rr) * p
        rr = rr_new
    return x, False


@dataclass
class NpgStepInfo:
    grad_norm: float
    quadratic_form: float = 0.0
    scale: float = 0.0
    cg_breakdown: bool = False
    skipped: bool = False


def npg_step(g: np.ndarray, fvp: FisherProduct, step_size: float, cg_iters: int = 10) -> tuple[np.ndarray, NpgStepInfo]:
    """
    Normalized natural-gradient step for gradient g.

    The direction x ~ (F + damping I)^-1 g is scaled so that
    step^T (F + damping I) step equals step_size. When CG breaks down the raw
    gradient is used with the same normalization. A vanishing gradient gives
    a zero step.
    """
    grad_norm = float(np.linalg.norm(g))
    info = NpgStepInfo(grad_norm=grad_norm)
    if grad_norm < GRAD_EPS:
        info.skipped = True
        return np.zeros_like(g), info

    direction, breakdown = conjugate_gradient(fvp, g, cg_iters)
    quad = float(direction @ fvp(direction)) if not breakdown else 0.0
    if breakdown or not np.isfinite(quad) or quad <= 0.0:
        logger.warning("conjugate gradient broke down; falling back to the gradient direction")
        breakdown = True
        direction = g.copy()
        quad = float(direction @ fvp(direction))
        if not np.isfinite(quad) or quad <= 0.0:
            raise FloatingPointError("Fisher product is not positive along the gradient")

    scale = math.sqrt(step_size / quad)
    step = scale * direction
    info.cg_breakdown = breakdown
    info.scale = scale
    info.quadratic_form = float(step @ fvp(step))
    return step, info


def npg_update(
    policy: Policy,
    g: np.ndarray,
    fvp: FisherProduct,
    step_size: float,
    cg_iters: int = 10,
) -> NpgStepInfo:
    """Apply one normalized NPG step to the policy in place."""
    step, info = npg_step(g, fvp, step_size, cg_iters)
    if not info.skipped:
        policy.set_flat(policy.get_flat() + step)
    return info


@dataclass
class FitResult:
    explained_variance: float
    mse: float


def explained_variance(predictions: np.ndarray, targets: np.ndarray) -> float:
    var = np.var(targets)
    return float(1.0 - np.var(targets - predictions) / var) if var > 0 else 0.0


def fit_value(
    value: ValueNet,
    states: np.ndarray,
    targets: np.ndarray,
    epochs: int,
    minibatch: int,
    rng: np.random.Generator,
) -> FitResult:
    """Regress the baseline onto value targets with Adam minibatch passes."""
    if not np.all(np.isfinite(targets)):
        raise ValueError("value targets must be finite")
    n = states.shape[0]
    minibatch = min(minibatch, n)
    params = value.net.flatten()
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, minibatch):
            idx = order[start:start + minibatch]
            pred, cache = value.net.forward_cache(states[idx])
            err = pred[:, 0] - targets[idx]
            grad, _ = value.net.backward(states[idx], (2.0 * err / idx.size)[:, None], cache)
            params = adam_step(value.optimizer, params, grad)
            value.net.unflatten(params)
    predictions = value(states)
    return FitResult(
        explained_variance=explained_variance(predictions, targets),
        mse=float(np.mean((predictions - targets) ** 2)),
    )


@dataclass
class NpgStats:
    """Per-step scalars for the training log."""

    mean_synthetic_return: float
    kl: float
    explained_variance: float
    cg_breakdown: bool
    n_diverged: int
    quadratic_form: float
    grad_norm: float
    n_samples: int
    members_used: list[int] = field(default_factory=list)


def worst_member(batch: SyntheticBatch, gamma: float) -> int:
    returns = batch.discounted_returns(gamma)
    members = np.unique(batch.members)
    means = [returns[batch.members == k].mean() for k in members]
    return int(members[int(np.argmin(means))])


def npg_iteration(
    policy: Policy,
    value: ValueNet,
    model: DynamicsModel,
    env: Env,
    cfg: NpgConfig,
    rng: np.random.Generator,
    buffer: Optional[ReplayBuffer] = None,
) -> NpgStats:
    """
    One model-based NPG step: rollouts, GAE, gradient, CG, normalized update,
    baseline refit. Policy and value are updated in place.
    """
    starts = initial_states(env, buffer, cfg, rng)
    batch = synthetic_rollouts(policy, model, env, starts, cfg, rng)
    mean_return = float(batch.discounted_returns(cfg.gamma).mean())

    members_used = sorted({int(k) for k in batch.members})
    if cfg.ensemble_mode == "worst_case" and model.n_members > 1:
        worst = worst_member(batch, cfg.gamma)
        batch = batch.select(batch.members == worst)
        members_used = [worst]

    advantages, targets = gae_advantages(batch, value, cfg.gamma, cfg.gae_lambda)
    states, actions = batch.valid(batch.states), batch.valid(batch.actions)
    g = policy_gradient(states, actions, batch.valid(advantages), policy, cfg.normalize_advantages)

    old_policy = policy.copy()
    _, cache = policy.net.forward_cache(states)

    def fvp(v: np.ndarray) -> np.ndarray:
        return fisher_vector_product(policy, states, v, cfg.cg_damping, cache)

    info = npg_update(policy, g, fvp, cfg.step_size, cfg.cg_iters)
    fit = fit_value(value, states, batch.valid(targets), cfg.value_epochs, cfg.value_minibatch, rng)

    stats = NpgStats(
        mean_synthetic_return=mean_return,
        kl=policy.kl_from(old_policy, states),
        explained_variance=fit.explained_variance,
        cg_breakdown=info.cg_breakdown,
        n_diverged=int(batch.diverged.sum()),
        quadratic_form=info.quadratic_form,
        grad_norm=info.grad_norm,
        n_samples=batch.n_samples,
        members_used=members_used,
    )
    logger.debug(
        f"npg step: J_model={stats.mean_synthetic_return:.4f} kl={stats.kl:.2e} "
        f"ev={stats.explained_variance:.3f} quad={stats.quadratic_form:.4f}"
    )
    return stats
