"""Point-set validation helpers.

A point set is represented throughout the package as a plain N x D float64
array: N points, one per row, in D dimensions. The helpers here coerce and
validate user input once at the API boundary so the numerical code can assume
clean arrays.
"""

from __future__ import annotations

import numpy as np

__all__ = ["as_points", "check_same_dim"]


def as_points(a, name: str = "points") -> np.ndarray:
    """Coerce ``a`` to an N x D float64 matrix of finite coordinates.

    A one-dimensional sequence is interpreted as N points in one dimension.
    Raises ``ValueError`` on empty input, non-numeric content or NaN/Inf
    coordinates. The input is never mutated.
    """
    pts = np.ascontiguousarray(a, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    if pts.ndim != 2:
        raise ValueError(f"{name} must be an N x D matrix, got array of ndim {pts.ndim}")
    if pts.shape[0] < 1 or pts.shape[1] < 1:
        raise ValueError(f"{name} must have N >= 1 points and D >= 1 dimensions, got shape {pts.shape}")
    if not np.isfinite(pts).all():
        raise ValueError(f"{name} contains non-finite coordinates")
    return pts


def check_same_dim(x: np.ndarray, y: np.ndarray) -> int:
    """Return the common dimension of two validated point sets or raise."""
    if x.shape[1] != y.shape[1]:
        raise ValueError(f"dimension mismatch: {x.shape[1]} vs {y.shape[1]}")
    return x.shape[1]
