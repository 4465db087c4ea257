"""
Fully connected networks with hand-written reverse and forward mode derivatives.

Hidden layers use tanh or relu, the output layer is linear. Inputs may be a
single vector or a batch (N, in); gradients returned by backward are summed
over the batch.
"""

from typing import Literal, Optional, Sequence

import numpy as np

Activation = Literal["tanh", "relu"]


def _act(z: np.ndarray, activation: Activation) -> np.ndarray:
    return np.tanh(z) if activation == "tanh" else np.maximum(z, 0.0)


def _act_grad(z: np.ndarray, h: np.ndarray, activation: Activation) -> np.ndarray:
    return 1.0 - h * h if activation == "tanh" else (z > 0).astype(np.float64)


class Mlp:
    """
    Multi-layer perceptron with a flat parameter view.

    Args:
        sizes: Layer widths including input and output, e.g. [obs, 32, 32, act]
        activation: Hidden activation
        rng: Generator for the fan-in uniform initialization
        out_scale: Multiplier applied to the initial output layer weights
    """

    def __init__(
        self,
        sizes: Sequence[int],
        activation: Activation = "tanh",
        rng: Optional[np.random.Generator] = None,
        out_scale: float = 1.0,
    ):
        if len(sizes) < 2:
            raise ValueError("an MLP needs at least input and output sizes")
        self.sizes = [int(s) for s in sizes]
        self.activation = activation
        rng = rng or np.random.default_rng(0)

        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for i, (fan_in, fan_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            bound = 1.0 / np.sqrt(fan_in)
            W = rng.uniform(-bound, bound, size=(fan_in, fan_out))
            if i == len(self.sizes) - 2:
                W *= out_scale
            self.weights.append(W)
            self.biases.append(np.zeros(fan_out))

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def n_params(self) -> int:
        return sum(W.size + b.size for W, b in zip(self.weights, self.biases))

    def flatten(self) -> np.ndarray:
        """Copy of all parameters as one vector (W1, b1, W2, b2, ...)."""
        return np.concatenate([np.concatenate([W.ravel(), b]) for W, b in zip(self.weights, self.biases)])

    def unflatten(self, flat: np.ndarray) -> "Mlp":
        """Load parameters from a flat vector in place."""
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got {flat.shape}")
        offset = 0
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            self.weights[i] = flat[offset:offset + W.size].reshape(W.shape).copy()
            offset += W.size
            self.biases[i] = flat[offset:offset + b.size].copy()
            offset += b.size
        return self

    def copy(self) -> "Mlp":
        clone = Mlp.__new__(Mlp)
        clone.sizes = list(self.sizes)
        clone.activation = self.activation
        clone.weights = [W.copy() for W in self.weights]
        clone.biases = [b.copy() for b in self.biases]
        return clone

    def _as_batch(self, x: np.ndarray) -> tuple[np.ndarray, bool]:
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        if x.shape[-1] != self.sizes[0]:
            raise ValueError(f"input dimension {x.shape[-1]} does not match first layer {self.sizes[0]}")
        return x, single

    def forward_cache(self, x: np.ndarray) -> tuple[np.ndarray, list]:
        """Forward pass returning (output, cache) with per-layer (input, pre-activation, post-activation)."""
        h, _ = self._as_batch(x)
        cache = []
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ W + b
            out = z if i == self.n_layers - 1 else _act(z, self.activation)
            cache.append((h, z, out))
            h = out
        return h, cache

    def forward(self, x: np.ndarray) -> np.ndarray:
        x, single = self._as_batch(x)
        out, _ = self.forward_cache(x)
        return out[0] if single else out

    __call__ = forward

    def backward(
        self,
        x: np.ndarray,
        upstream: np.ndarray,
        cache: Optional[list] = None,
    ) -> tuple[np.ndarray, np.ndarray]:
        """
        Reverse-mode gradient of sum(upstream * forward(x)).

        Returns:
            (flat parameter gradient summed over the batch, input gradient)
        """
        x, single = self._as_batch(x)
        if cache is None:
            _, cache = self.forward_cache(x)
        delta = np.atleast_2d(np.asarray(upstream, dtype=np.float64))
        if delta.shape != (x.shape[0], self.sizes[-1]):
            raise ValueError(f"upstream shape {delta.shape} does not match output {(x.shape[0], self.sizes[-1])}")

        grads: list[np.ndarray] = []
        for i in reversed(range(self.n_layers)):
            h_in, z, out = cache[i]
            if i != self.n_layers - 1:
                delta = delta * _act_grad(z, out, self.activation)
            grads.append(delta.sum(axis=0))
            grads.append((h_in.T @ delta).ravel())
            delta = delta @ self.weights[i].T
        grad_flat = np.concatenate(grads[::-1])
        return grad_flat, (delta[0] if single else delta)

    def jvp(self, x: np.ndarray, direction: np.ndarray, cache: Optional[list] = None) -> np.ndarray:
        """
        Forward-mode derivative of the output along a parameter direction.

        Returns:
            d forward(x) / d theta . direction, shape (N, out)
        """
        x, _ = self._as_batch(x)
        if cache is None:
            _, cache = self.forward_cache(x)
        tangent_model = self.copy().unflatten(direction)

        tangent = np.zeros_like(x)
        for i in range(self.n_layers):
            h_in, z, out = cache[i]
            dz = tangent @ self.weights[i] + h_in @ tangent_model.weights[i] + tangent_model.biases[i]
            tangent = dz if i == self.n_layers - 1 else dz * _act_grad(z, out, self.activation)
        return tangent
