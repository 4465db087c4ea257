"""Distances between probability distributions used by the theory harness."""

import numpy as np

from ..errors import SupportViolationError


def _pair(p, q) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"dimension mismatch: {p.shape} vs {q.shape}")
    return p, q


def tv_distance(p, q) -> float:
    """Total variation distance 0.5 * sum |p - q|."""
    p, q = _pair(p, q)
    return float(0.5 * np.sum(np.abs(p - q)))


def kl_divergence(p, q) -> float:
    """
    Categorical KL(p || q).

    Raises:
        SupportViolationError: if p puts mass where q has none. Callers that
            want a finite value must smooth q themselves.
    """
    p, q = _pair(p, q)
    support = p > 0
    if np.any(q[support] <= 0):
        raise SupportViolationError("q has zero mass where p is positive")
    return float(max(np.sum(p[support] * np.log(p[support] / q[support])), 0.0))


def row_tv(P1: np.ndarray, P2: np.ndarray) -> np.ndarray:
    """TV between matching rows along the last axis."""
    P1, P2 = _pair(P1, P2)
    return 0.5 * np.abs(P1 - P2).sum(axis=-1)


def row_kl(P1: np.ndarray, P2: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    """
    KL between matching rows along the last axis.

    Args:
        mask: Optional boolean array over the leading axes; rows outside the
            mask are reported as 0 and are not checked for support.
    """
    P1, P2 = _pair(P1, P2)
    if mask is None:
        mask = np.ones(P1.shape[:-1], dtype=bool)
    violated = (P1 > 0) & (P2 <= 0) & mask[..., None]
    if np.any(violated):
        raise SupportViolationError("model assigns zero probability to a reachable world transition")
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(P1 > 0, P1 * np.log(np.where(P1 > 0, P1, 1.0) / np.where(P2 > 0, P2, 1.0)), 0.0)
    return np.where(mask, np.maximum(terms.sum(axis=-1), 0.0), 0.0)


def gaussian_kl(mean1, mean2, sigma: float) -> float:
    """KL between isotropic Gaussians with the same scale: |m1 - m2|^2 / (2 sigma^2)."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    mean1, mean2 = _pair(mean1, mean2)
    return float(np.sum((mean1 - mean2) ** 2) / (2.0 * sigma ** 2))
