"""
Stochastic policies and the value baseline.

Both policy classes expose the same flat-parameter interface used by the NPG
machinery: `get_flat`/`set_flat`, `sample`, `log_prob`, `score` (weighted sum
of score functions) and `fisher_vector_product` (exact Fisher of pi(.|s)
averaged over states, applied matrix-free).
"""

from pathlib import Path
from typing import Any, Optional, Sequence, Union

import numpy as np

from ..errors import CheckpointError
from ..nn import AdamState, Mlp, gaussian_kl_diag, gaussian_log_prob, gaussian_log_prob_grads, load_flat, save_flat

MEAN_OUT_SCALE = 0.01


class GaussianPolicy:
    """
    Diagonal Gaussian with an MLP mean and state-independent log-std.

    Flat parameters are the mean network's parameters followed by log_std.
    """

    kind = "gaussian"

    def __init__(
        self,
        state_dim: int,
        action_dim: int,
        hidden: Sequence[int] = (32, 32),
        init_log_std: float = -1.0,
        rng: Optional[np.random.Generator] = None,
    ):
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.net = Mlp([state_dim, *hidden, action_dim], activation="tanh", rng=rng, out_scale=MEAN_OUT_SCALE)
        self.log_std = np.full(action_dim, float(init_log_std))

    @property
    def n_params(self) -> int:
        return self.net.n_params + self.action_dim

    def get_flat(self) -> np.ndarray:
        return np.concatenate([self.net.flatten(), self.log_std])

    def set_flat(self, flat: np.ndarray) -> None:
        self.net.unflatten(flat[:self.net.n_params])
        self.log_std = np.array(flat[self.net.n_params:], dtype=np.float64)

    def copy(self) -> "GaussianPolicy":
        clone = GaussianPolicy.__new__(GaussianPolicy)
        clone.state_dim, clone.action_dim = self.state_dim, self.action_dim
        clone.net = self.net.copy()
        clone.log_std = self.log_std.copy()
        return clone

    def mean(self, states: np.ndarray) -> np.ndarray:
        return self.net.forward(np.atleast_2d(states))

    def sample(self, states: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        mu = self.mean(states)
        return mu + np.exp(self.log_std) * rng.standard_normal(mu.shape)

    def log_prob(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        return gaussian_log_prob(np.atleast_2d(actions), self.mean(states), self.log_std)

    def score(self, states: np.ndarray, actions: np.ndarray, weights: np.ndarray) -> np.ndarray:
        """sum_i weights_i * grad log pi(a_i | s_i) as a flat vector."""
        states = np.atleast_2d(states)
        mu, cache = self.net.forward_cache(states)
        d_mean, d_log_std = gaussian_log_prob_grads(np.atleast_2d(actions), mu, self.log_std)
        w = np.asarray(weights, dtype=np.float64)[:, None]
        grad_net, _ = self.net.backward(states, d_mean * w, cache)
        return np.concatenate([grad_net, np.sum(d_log_std * w, axis=0)])

    def fisher_vector_product(self, states: np.ndarray, v: np.ndarray, cache: Optional[list] = None) -> np.ndarray:
        """F v with F = E_s[J_mu^T Sigma^-1 J_mu] on the mean block and 2 I on log_std."""
        states = np.atleast_2d(states)
        n = self.net.n_params
        if v.shape != (self.n_params,):
            raise ValueError(f"vector has shape {v.shape}, policy has {self.n_params} parameters")
        tangent = self.net.jvp(states, v[:n], cache)
        weighted = tangent * np.exp(-2.0 * self.log_std)
        fv_net, _ = self.net.backward(states, weighted, cache)
        return np.concatenate([fv_net / states.shape[0], 2.0 * v[n:]])

    def kl_from(self, old: "GaussianPolicy", states: np.ndarray) -> float:
        """Mean KL(old || self) over states."""
        return float(np.mean(gaussian_kl_diag(old.mean(states), old.log_std, self.mean(states), self.log_std)))

    def header(self) -> dict[str, Any]:
        return {"kind": self.kind, "sizes": self.net.sizes}


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


class CategoricalPolicy:
    """
    Softmax policy over a discrete action set, carried as one-hot vectors.

    Flat parameters are the logit network's parameters.
    """

    kind = "categorical"

    def __init__(
        self,
        state_dim: int,
        n_actions: int,
        hidden: Sequence[int] = (32, 32),
        rng: Optional[np.random.Generator] = None,
    ):
        self.state_dim = state_dim
        self.action_dim = n_actions
        self.net = Mlp([state_dim, *hidden, n_actions], activation="tanh", rng=rng, out_scale=MEAN_OUT_SCALE)

    @property
    def n_params(self) -> int:
        return self.net.n_params

    def get_flat(self) -> np.ndarray:
        return self.net.flatten()

    def set_flat(self, flat: np.ndarray) -> None:
        self.net.unflatten(flat)

    def copy(self) -> "CategoricalPolicy":
        clone = CategoricalPolicy.__new__(CategoricalPolicy)
        clone.state_dim, clone.action_dim = self.state_dim, self.action_dim
        clone.net = self.net.copy()
        return clone

    def action_probs(self, states: np.ndarray) -> np.ndarray:
        return np.exp(_log_softmax(self.net.forward(np.atleast_2d(states))))

    def sample(self, states: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        probs = self.action_probs(states)
        u = rng.random((probs.shape[0], 1))
        idx = np.minimum((np.cumsum(probs, axis=1) < u).sum(axis=1), self.action_dim - 1)
        actions = np.zeros_like(probs)
        actions[np.arange(idx.size), idx] = 1.0
        return actions

    def log_prob(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        return np.sum(np.atleast_2d(actions) * _log_softmax(self.net.forward(np.atleast_2d(states))), axis=1)

    def score(self, states: np.ndarray, actions: np.ndarray, weights: np.ndarray) -> np.ndarray:
        states = np.atleast_2d(states)
        logits, cache = self.net.forward_cache(states)
        probs = np.exp(_log_softmax(logits))
        upstream = (np.atleast_2d(actions) - probs) * np.asarray(weights, dtype=np.float64)[:, None]
        grad, _ = self.net.backward(states, upstream, cache)
        return grad

    def fisher_vector_product(self, states: np.ndarray, v: np.ndarray, cache: Optional[list] = None) -> np.ndarray:
        """F v with F = E_s[J_z^T (diag p - p p^T) J_z] for logits z."""
        states = np.atleast_2d(states)
        if v.shape != (self.n_params,):
            raise ValueError(f"vector has shape {v.shape}, policy has {self.n_params} parameters")
        if cache is None:
            _, cache = self.net.forward_cache(states)
        probs = np.exp(_log_softmax(cache[-1][2]))
        tangent = self.net.jvp(states, v, cache)
        curvature = probs * tangent - probs * np.sum(probs * tangent, axis=1, keepdims=True)
        fv, _ = self.net.backward(states, curvature, cache)
        return fv / states.shape[0]

    def kl_from(self, old: "CategoricalPolicy", states: np.ndarray) -> float:
        old_log = _log_softmax(old.net.forward(np.atleast_2d(states)))
        new_log = _log_softmax(self.net.forward(np.atleast_2d(states)))
        return float(np.mean(np.sum(np.exp(old_log) * (old_log - new_log), axis=1)))

    def header(self) -> dict[str, Any]:
        return {"kind": self.kind, "sizes": self.net.sizes}


Policy = Union[GaussianPolicy, CategoricalPolicy]


class ValueNet:
    """State-value baseline V(s) with its own persistent Adam state."""

    def __init__(
        self,
        state_dim: int,
        hidden: Sequence[int] = (64, 64),
        lr: float = 1e-3,
        rng: Optional[np.random.Generator] = None,
    ):
        self.net = Mlp([state_dim, *hidden, 1], activation="tanh", rng=rng)
        self.optimizer = AdamState(self.net.n_params, lr=lr)

    def __call__(self, states: np.ndarray) -> np.ndarray:
        return self.net.forward(np.atleast_2d(states))[:, 0]

    predict = __call__


def make_policy(
    state_dim: int,
    action_dim: int,
    discrete: bool,
    hidden: Sequence[int],
    init_log_std: float = -1.0,
    rng: Optional[np.random.Generator] = None,
) -> Policy:
    if discrete:
        return CategoricalPolicy(state_dim, action_dim, hidden, rng=rng)
    return GaussianPolicy(state_dim, action_dim, hidden, init_log_std=init_log_std, rng=rng)


def save_policy(stem: Path, policy: Policy) -> None:
    save_flat(stem, policy.get_flat(), {**policy.header(), "action_dim": policy.action_dim})


def load_policy(stem: Path) -> Policy:
    flat, header = load_flat(stem)
    sizes = header["sizes"]
    if header["kind"] == "gaussian":
        policy: Policy = GaussianPolicy(sizes[0], sizes[-1], sizes[1:-1])
    elif header["kind"] == "categorical":
        policy = CategoricalPolicy(sizes[0], sizes[-1], sizes[1:-1])
    else:
        raise CheckpointError(f"{stem}: unknown policy kind {header['kind']!r}")
    if flat.size != policy.n_params:
        raise CheckpointError(f"{stem}: parameter count {flat.size} does not match {policy.n_params}")
    policy.set_flat(flat)
    return policy
