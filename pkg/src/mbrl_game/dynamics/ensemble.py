"""
Ensemble of one-step dynamics models.

Each member predicts a normalized state difference:

    s' = s + delta_scale * MLP((s - mu_s) / sigma_s, (a - mu_a) / sigma_a)

Members share the Normalizer and differ only by initialization seed and
minibatch order. Training minimizes the mean squared normalized-delta error
with Adam.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..envs import seed_list
from ..errors import CheckpointError, ModelTrainingError
from ..nn import AdamState, Mlp, adam_step, load_mlp, save_mlp
from .buffer import ReplayBuffer
from .normalizer import Normalizer

logger = logging.getLogger(__name__)


class DynamicsEnsemble:
    """
    K delta-parameterized relu MLPs.

    Args:
        state_dim: State vector size
        action_dim: Action vector size
        hidden: Hidden layer widths
        n_members: Ensemble size K
        seed: Base seed; member i is initialized from (seed, i)
        lr: Adam learning rate
    """

    def __init__(
        self,
        state_dim: int,
        action_dim: int,
        hidden: Sequence[int] = (128, 128),
        n_members: int = 4,
        seed: int = 0,
        lr: float = 1e-3,
    ):
        if n_members < 1:
            raise ValueError(f"ensemble needs at least one member, got {n_members}")
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.hidden = tuple(hidden)
        self.lr = lr
        self.normalizer: Optional[Normalizer] = None
        self.members: list[Mlp] = []
        self.optimizers: list[AdamState] = []
        self.reinitialize(seed, n_members)

    @property
    def n_members(self) -> int:
        return len(self.members)

    def reinitialize(self, seed: int, n_members: Optional[int] = None) -> None:
        """Fresh member weights and optimizer state; the normalizer is kept."""
        n_members = n_members or self.n_members
        sizes = [self.state_dim + self.action_dim, *self.hidden, self.state_dim]
        self.members = [
            Mlp(sizes, activation="relu", rng=np.random.default_rng([seed, i]))
            for i in range(n_members)
        ]
        self.optimizers = [AdamState(net.n_params, lr=self.lr) for net in self.members]

    def _require_normalizer(self) -> Normalizer:
        if self.normalizer is None:
            raise ModelTrainingError("dynamics model used before its normalizer was fitted")
        return self.normalizer

    def predict(self, states: np.ndarray, actions: np.ndarray, member: int = 0) -> np.ndarray:
        """Deterministic next-state prediction of one member."""
        norm = self._require_normalizer()
        states = np.atleast_2d(states)
        out = self.members[member].forward(norm.inputs(states, np.atleast_2d(actions)))
        return states + norm.delta_scale * out

    def predict_all(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        """Predictions of every member, shape (K, N, state_dim)."""
        return np.stack([self.predict(states, actions, k) for k in range(self.n_members)])

    def model_loss(self, member: int, states: np.ndarray, actions: np.ndarray, next_states: np.ndarray) -> float:
        """Mean squared normalized-delta error of one member on a dataset."""
        if np.atleast_2d(states).shape[0] == 0:
            raise ValueError("model_loss needs a non-empty dataset")
        norm = self._require_normalizer()
        pred = self.members[member].forward(norm.inputs(states, actions))
        return float(np.mean((pred - norm.delta_targets(states, next_states)) ** 2))

    def save(self, directory: Path) -> None:
        norm = self._require_normalizer()
        directory = Path(directory)
        for k, net in enumerate(self.members):
            save_mlp(directory / f"member_{k}", net, normalizer=norm.to_dict(), lr=self.lr)

    @classmethod
    def load(cls, directory: Path) -> "DynamicsEnsemble":
        directory = Path(directory)
        stems = sorted(directory.glob("member_*.npy"), key=lambda p: int(p.stem.split("_")[1]))
        if not stems:
            raise CheckpointError(f"no ensemble members found in {directory}")
        nets, headers = zip(*(load_mlp(stem.with_suffix("")) for stem in stems))
        sizes = nets[0].sizes
        ensemble = cls(sizes[-1], sizes[0] - sizes[-1], sizes[1:-1], len(nets), lr=headers[0].get("lr", 1e-3))
        ensemble.members = list(nets)
        ensemble.optimizers = [AdamState(net.n_params, lr=ensemble.lr) for net in nets]
        ensemble.normalizer = Normalizer.from_dict(headers[0]["normalizer"])
        return ensemble


@dataclass
class TrainingHistory:
    """Per-member loss curves of one training call."""

    member_losses: list[list[float]] = field(default_factory=list)
    steps: int = 0
    minibatch: int = 0
    train_loss: float = 0.0
    holdout_loss: Optional[float] = None


def split_holdout(n: int, fraction: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Random (train, holdout) index split; holdout is only used for reporting."""
    order = rng.permutation(n)
    n_hold = 0
    if fraction > 0 and n >= 2:
        n_hold = min(max(1, int(round(fraction * n))), n - 1)
    return order[n_hold:], order[:n_hold]


def _fit_member(
    net: Mlp,
    optimizer: AdamState,
    inputs: np.ndarray,
    targets: np.ndarray,
    steps: int,
    minibatch: int,
    rng: np.random.Generator,
    member: int,
) -> list[float]:
    n = inputs.shape[0]
    steps_per_epoch = math.ceil(n / minibatch)
    params = net.flatten()
    losses: list[float] = []
    running = 0.0
    order = rng.permutation(n)
    for step in range(steps):
        pos = step % steps_per_epoch
        if pos == 0 and step > 0:
            order = rng.permutation(n)
        idx = order[pos * minibatch:(pos + 1) * minibatch]
        x, y = inputs[idx], targets[idx]
        pred, cache = net.forward_cache(x)
        err = pred - y
        loss = float(np.mean(err ** 2))
        if not np.isfinite(loss):
            raise ModelTrainingError(f"member {member}: non-finite loss at step {step}")
        grad, _ = net.backward(x, 2.0 * err / err.size, cache)
        try:
            params = adam_step(optimizer, params, grad)
        except FloatingPointError as e:
            raise ModelTrainingError(f"member {member}: {e} at step {step}") from e
        net.unflatten(params)
        running += loss
        if pos == steps_per_epoch - 1 or step == steps - 1:
            losses.append(running / (pos + 1))
            running = 0.0
    return losses


def _prepare(ensemble: DynamicsEnsemble, buffer: ReplayBuffer, refit: bool) -> tuple[np.ndarray, np.ndarray, dict]:
    if len(buffer) == 0:
        raise ValueError("cannot train a dynamics model on an empty buffer")
    data = buffer.as_arrays()
    if refit or ensemble.normalizer is None:
        ensemble.normalizer = Normalizer.fit(data["s"], data["a"], data["s_next"])
    norm = ensemble.normalizer
    return norm.inputs(data["s"], data["a"]), norm.delta_targets(data["s"], data["s_next"]), data


def _finish(
    ensemble: DynamicsEnsemble,
    history: TrainingHistory,
    inputs: np.ndarray,
    targets: np.ndarray,
    train_idx: np.ndarray,
    hold_idx: np.ndarray,
) -> TrainingHistory:
    def mse(net: Mlp, idx: np.ndarray) -> float:
        return float(np.mean((net.forward(inputs[idx]) - targets[idx]) ** 2))

    history.train_loss = float(np.mean([mse(net, train_idx) for net in ensemble.members]))
    if hold_idx.size:
        history.holdout_loss = float(np.mean([mse(net, hold_idx) for net in ensemble.members]))
    if not np.isfinite(history.train_loss):
        raise ModelTrainingError("dynamics model training ended with a non-finite loss")
    return history


def train_ensemble(
    ensemble: DynamicsEnsemble,
    buffer: ReplayBuffer,
    epochs: int,
    minibatch: int = 200,
    seed: int | Sequence[int] = 0,
    holdout_fraction: float = 0.1,
    min_steps: int = 100,
    max_steps: int = 100_000,
) -> TrainingHistory:
    """
    Fit every member on the buffer contents.

    The normalizer is refitted on the whole buffer first. Total gradient
    steps are epochs * ceil(n_train / minibatch) clamped to [min_steps,
    max_steps]; the minibatch shrinks to the training set when it is larger.

    Returns:
        TrainingHistory with one loss per epoch for each member

    Raises:
        ModelTrainingError: on a non-finite loss or gradient
    """
    rng = np.random.default_rng(seed)
    inputs, targets, _ = _prepare(ensemble, buffer, refit=True)
    train_idx, hold_idx = split_holdout(inputs.shape[0], holdout_fraction, rng)

    minibatch = min(minibatch, train_idx.size)
    steps = epochs * math.ceil(train_idx.size / minibatch)
    steps = int(np.clip(steps, min_steps, max_steps))

    history = TrainingHistory(steps=steps, minibatch=minibatch)
    for k, (net, opt) in enumerate(zip(ensemble.members, ensemble.optimizers)):
        member_rng = np.random.default_rng([*seed_list(seed), k])
        history.member_losses.append(
            _fit_member(net, opt, inputs[train_idx], targets[train_idx], steps, minibatch, member_rng, k)
        )
    history = _finish(ensemble, history, inputs, targets, train_idx, hold_idx)
    logger.debug(
        f"trained {ensemble.n_members} members for {steps} steps: "
        f"train {history.train_loss:.3e}, holdout {history.holdout_loss}"
    )
    return history


def beta_step(
    ensemble: DynamicsEnsemble,
    buffer: ReplayBuffer,
    steps: int,
    lr: float,
    minibatch: int = 200,
    seed: int | Sequence[int] = 0,
    holdout_fraction: float = 0.1,
) -> TrainingHistory:
    """
    Conservative model step: a fixed number of small-learning-rate Adam steps.

    The normalizer is only fitted if the model has none yet, so the step
    moves the current model instead of redefining its output units.
    """
    rng = np.random.default_rng(seed)
    inputs, targets, _ = _prepare(ensemble, buffer, refit=False)
    train_idx, hold_idx = split_holdout(inputs.shape[0], holdout_fraction, rng)
    minibatch = min(minibatch, train_idx.size)

    history = TrainingHistory(steps=steps, minibatch=minibatch)
    for k, (net, opt) in enumerate(zip(ensemble.members, ensemble.optimizers)):
        base_lr, opt.lr = opt.lr, lr
        try:
            member_rng = np.random.default_rng([*seed_list(seed), k])
            history.member_losses.append(
                _fit_member(net, opt, inputs[train_idx], targets[train_idx], steps, minibatch, member_rng, k)
            )
        finally:
            opt.lr = base_lr
    return _finish(ensemble, history, inputs, targets, train_idx, hold_idx)
