"""Adam optimizer over flat parameter vectors."""

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    """Moment estimates and step counter for one flat parameter vector."""

    n_params: int
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: np.ndarray = field(default=None)
    v: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.m is None:
            self.m = np.zeros(self.n_params)
        if self.v is None:
            self.v = np.zeros(self.n_params)


def adam_step(state: AdamState, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """
    One bias-corrected Adam descent step.

    Moments are updated in place on state; the updated parameters are returned.

    Raises:
        FloatingPointError: on a non-finite gradient.
    """
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != state.m.shape or params.shape != state.m.shape:
        raise ValueError(f"shape mismatch: params {params.shape}, grad {grad.shape}, state {state.m.shape}")
    if not np.all(np.isfinite(grad)):
        raise FloatingPointError("non-finite gradient passed to Adam")

    state.step += 1
    state.m *= state.beta1
    state.m += (1.0 - state.beta1) * grad
    state.v *= state.beta2
    state.v += (1.0 - state.beta2) * (grad * grad)

    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    m_hat = state.m / bc1
    v_hat = state.v / bc2
    return params - state.lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
