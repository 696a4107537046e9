"""Registration error metrics."""

from __future__ import annotations

import numpy as np

from .pointset import as_points, check_same_dim

__all__ = ["rotation_error", "correspondence_mse"]


def _check_rotation(r, name):
    r = np.ascontiguousarray(r, dtype=float)
    d = r.shape[0]
    if r.ndim != 2 or r.shape[1] != d:
        raise ValueError(f"{name} must be a square matrix")
    if np.linalg.norm(r.T @ r - np.eye(d)) > 1e-6 or abs(np.linalg.det(r) - 1.0) > 1e-6:
        raise ValueError(f"{name} is not a proper rotation")
    return r


def rotation_error(r_true, r_est) -> float:
    """Frobenius norm of the difference between two rotation matrices."""
    r_true = _check_rotation(r_true, "r_true")
    r_est = _check_rotation(r_est, "r_est")
    if r_true.shape != r_est.shape:
        raise ValueError("rotation dimensions differ")
    return float(np.linalg.norm(r_true - r_est))


def correspondence_mse(x_true_corr, t_y) -> float:
    """Mean squared distance between ground-truth corresponding point pairs."""
    a = as_points(x_true_corr, "x_true_corr")
    b = as_points(t_y, "t_y")
    check_same_dim(a, b)
    if a.shape[0] != b.shape[0]:
        raise ValueError(f"pair count mismatch: {a.shape[0]} vs {b.shape[0]}")
    return float(((a - b) ** 2).sum(axis=1).mean())
