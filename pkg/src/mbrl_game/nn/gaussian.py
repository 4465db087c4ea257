"""Diagonal Gaussian log-density and its derivatives."""

import numpy as np

LOG_2PI = np.log(2.0 * np.pi)


def gaussian_log_prob(x: np.ndarray, mean: np.ndarray, log_std: np.ndarray) -> np.ndarray:
    """Log-density of a diagonal Gaussian, summed over the last axis."""
    z = (x - mean) * np.exp(-log_std)
    return -0.5 * np.sum(z * z, axis=-1) - np.sum(log_std, axis=-1) - 0.5 * x.shape[-1] * LOG_2PI


def gaussian_log_prob_grads(
    x: np.ndarray, mean: np.ndarray, log_std: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """
    Partial derivatives of the log-density.

    Returns:
        (d/d mean, d/d log_std), each with the broadcast shape of x
    """
    inv_var = np.exp(-2.0 * log_std)
    diff = x - mean
    d_mean = diff * inv_var
    d_log_std = diff * diff * inv_var - 1.0
    return d_mean, d_log_std


def gaussian_kl_diag(mean1, log_std1, mean2, log_std2) -> np.ndarray:
    """KL(N1 || N2) for diagonal Gaussians, summed over the last axis."""
    var1 = np.exp(2.0 * log_std1)
    var2 = np.exp(2.0 * log_std2)
    return np.sum(
        log_std2 - log_std1 + (var1 + (mean1 - mean2) ** 2) / (2.0 * var2) - 0.5,
        axis=-1,
    )
