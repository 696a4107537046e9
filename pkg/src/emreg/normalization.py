"""Pre-alignment to zero mean / unit variance and mapping results back.

Registration always runs in normalized coordinates (both sets independently
shifted to zero mean and scaled to unit overall variance); the recovered
transform is then re-expressed in the original coordinates.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .pointset import as_points
from .transforms import AffineTransform, ComposedFieldTransform, NonRigidField, RigidTransform

__all__ = ["NormalizationParams", "normalize", "denormalize_transform"]


@dataclass(frozen=True)
class NormalizationParams:
    """Mean vector and overall scale removed from a point set."""

    mu: np.ndarray
    rho: float

    def __post_init__(self):
        mu = np.ascontiguousarray(self.mu, dtype=float).reshape(-1)
        if not (self.rho > 0.0 and np.isfinite(self.rho)):
            raise ValueError(f"rho must be finite and > 0, got {self.rho}")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "rho", float(self.rho))

    @classmethod
    def identity(cls, dim: int) -> "NormalizationParams":
        return cls(mu=np.zeros(dim), rho=1.0)

    def apply(self, pts) -> np.ndarray:
        return (as_points(pts) - self.mu) / self.rho

    def invert(self, pts) -> np.ndarray:
        return as_points(pts) * self.rho + self.mu


def normalize(p) -> tuple[np.ndarray, NormalizationParams]:
    """Shift to zero mean and scale so the mean squared norm per dimension is 1.

    The scale is a single scalar computed jointly over all coordinates,
    rho = sqrt(sum ||p_i - mu||^2 / (N * D)). Zero-variance input keeps
    rho = 1 with a warning.
    """
    pts = as_points(p)
    n, d = pts.shape
    mu = pts.mean(axis=0)
    centered = pts - mu
    rho = float(np.sqrt((centered * centered).sum() / (n * d)))
    if rho == 0.0:
        warnings.warn("zero-variance point set; scale left at 1")
        rho = 1.0
    return centered / rho, NormalizationParams(mu=mu, rho=rho)


def denormalize_transform(t, nx: NormalizationParams, ny: NormalizationParams):
    """Re-express a transform estimated between normalized sets in original coordinates.

    For rigid/affine the result is a transform of the same kind such that
    applying it to the original model points equals denormalizing the
    normalized-space result. A displacement field cannot be re-anchored in
    closed form, so it is returned as a composite map (normalize by ``ny``,
    evaluate, denormalize by ``nx``).
    """
    if isinstance(t, RigidTransform):
        s_new = t.s * nx.rho / ny.rho
        t_new = nx.rho * t.t + nx.mu - s_new * (t.r @ ny.mu)
        return RigidTransform(r=t.r, s=s_new, t=t_new)
    if isinstance(t, AffineTransform):
        b_new = (nx.rho / ny.rho) * t.b
        t_new = nx.rho * t.t + nx.mu - b_new @ ny.mu
        return AffineTransform(b=b_new, t=t_new)
    if isinstance(t, NonRigidField):
        return ComposedFieldTransform(field=t, norm_x=nx, norm_y=ny)
    raise TypeError(f"cannot denormalize transform of type {type(t).__name__}")
