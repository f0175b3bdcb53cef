"""Regularised singular drift profiles shared by the PDE and SDE experiments.

``singular_drift`` is an inward field of size ``c / (|x^1| + ... + |x^d|)``
near the origin, smoothed at scale ``eps``.  ``critical_drift`` is the
parabolic-critical inward field of size ``c / (sqrt|t| + |x|)``.  Both carry
exact Jacobians so no finite differencing is needed along SDE paths.
"""

from __future__ import annotations

import numpy as np


def singular_drift(x: np.ndarray, c: float, eps: float) -> np.ndarray:
    """``-c x / (R S)`` with ``R = sqrt(|x|^2 + eps^2)``, ``S = sum_i sqrt(x_i^2 + eps^2)``; ``x`` is ``(..., d)``."""
    R = np.sqrt(np.sum(x**2, -1) + eps**2)[..., None]
    S = np.sum(np.sqrt(x**2 + eps**2), -1)[..., None]
    return -c * x / (R * S)


def singular_drift_jacobian(x: np.ndarray, c: float, eps: float) -> np.ndarray:
    """``J[..., i, j] = d b_i / d x_j`` for :func:`singular_drift`."""
    d = x.shape[-1]
    R = np.sqrt(np.sum(x**2, -1) + eps**2)[..., None, None]
    si = np.sqrt(x**2 + eps**2)
    S = np.sum(si, -1)[..., None, None]
    xi = x[..., :, None]
    xj = x[..., None, :]
    dS = (x / si)[..., None, :]
    eye = np.eye(d)
    return -c * (eye / (R * S) - xi * xj / (R**3 * S) - xi * dS / (R * S**2))


def critical_drift(t, x: np.ndarray, c: float, eps: float) -> np.ndarray:
    """Inward field of size ``c / (sqrt(|t| + eps^2) + sqrt(|x|^2 + eps^2))``."""
    t = np.asarray(t, float)[..., None] if np.ndim(t) else float(t)
    R = np.sqrt(np.sum(x**2, -1) + eps**2)[..., None]
    Q = np.sqrt(np.abs(t) + eps**2) + R
    return -c * x / (R * Q)


def critical_drift_jacobian(t, x: np.ndarray, c: float, eps: float) -> np.ndarray:
    d = x.shape[-1]
    t = np.asarray(t, float)[..., None, None] if np.ndim(t) else float(t)
    R = np.sqrt(np.sum(x**2, -1) + eps**2)[..., None, None]
    Q = np.sqrt(np.abs(t) + eps**2) + R
    xi = x[..., :, None]
    xj = x[..., None, :]
    # d/dx_j [x_i / (R Q)] = delta_ij/(RQ) - x_i x_j (Q + R) / (R^3 Q^2)
    return -c * (np.eye(d) / (R * Q) - xi * xj * (Q + R) / (R**3 * Q**2))


def l1_inverse_profile(points: np.ndarray) -> np.ndarray:
    """``(|x^1| + ... + |x^d|)**(-1)`` on an ``(N, d)`` array of points."""
    return 1.0 / np.sum(np.abs(points), -1)
