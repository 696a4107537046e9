"""Built-in synthetic point sets.

Stand-ins for the classic benchmark shapes at desk scale: a structured 2-D
outline ("fish") and a clustered 3-D cloud ("cloud"). Both are deterministic
given their arguments; real data enters through :mod:`emreg.io`.
"""

from __future__ import annotations

import numpy as np

__all__ = ["make_fish_outline", "make_clustered_cloud"]


def _polyline_resample(vertices: np.ndarray, n: int) -> np.ndarray:
    """n points equally spaced by arclength along a closed polyline."""
    closed = np.vstack([vertices, vertices[:1]])
    seg = np.linalg.norm(np.diff(closed, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    stations = np.linspace(0.0, cum[-1], n, endpoint=False)
    out = np.empty((n, 2))
    for c in range(2):
        out[:, c] = np.interp(stations, cum, closed[:, c])
    return out


def make_fish_outline(n: int = 91) -> np.ndarray:
    """Closed fish-shaped outline: elliptical body, notched triangular tail."""
    if n < 8:
        raise ValueError("outline needs at least 8 points")
    # Notch kept shallow: a deep V folds the outline back on itself, which
    # puts opposite-wall samples closer than the along-curve spacing.
    theta = np.linspace(0.0, 2.2, 60)
    upper_body = np.column_stack([np.cos(theta), 0.45 * np.sin(theta)])
    tail = np.array([
        [-1.45, 0.50],
        [-1.25, 0.00],
        [-1.45, -0.50],
    ])
    lower_body = np.column_stack([np.cos(-theta[::-1]), 0.45 * np.sin(-theta[::-1])])
    vertices = np.vstack([upper_body, tail, lower_body])
    return _polyline_resample(vertices, n)


def make_clustered_cloud(n: int = 1900, blobs: int = 10, blob_std: float = 0.25,
                         box: float = 2.0, dim: int = 3, seed: int = 0) -> np.ndarray:
    """Gaussian blobs scattered in a box; sizes split as evenly as possible."""
    if n < blobs:
        raise ValueError("need at least one point per blob")
    rng = np.random.default_rng(seed)
    centers = rng.uniform(-box / 2.0, box / 2.0, size=(blobs, dim))
    sizes = np.full(blobs, n // blobs)
    sizes[: n % blobs] += 1
    parts = [centers[i] + blob_std * rng.standard_normal((sizes[i], dim)) for i in range(blobs)]
    return np.vstack(parts)
