"""Transform value types: rigid, affine, and kernel-parameterized displacement fields.

All types are immutable; applying one never mutates its input points.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .pointset import as_points

__all__ = [
    "RigidTransform",
    "AffineTransform",
    "NonRigidField",
    "ComposedFieldTransform",
    "apply_transform",
    "gaussian_affinity",
    "rotation_2d",
    "rotation_about_axis",
    "random_rotation",
]

_ORTHO_TOL = 1e-12


def gaussian_affinity(a: np.ndarray, b: np.ndarray, beta: float) -> np.ndarray:
    """Matrix of exp(-||a_i - b_j||^2 / (2 beta^2)) affinities."""
    return np.exp(cdist(a, b, "sqeuclidean") / (-2.0 * beta * beta))


@dataclass(frozen=True)
class RigidTransform:
    """z -> s * R z + t with R a proper rotation.

    The constructor enforces orthonormality and det(R) = +1; the scale is not
    sign-constrained (a negative estimate is reported upstream as a warning
    rather than silently fixed).
    """

    r: np.ndarray
    s: float
    t: np.ndarray

    def __post_init__(self):
        r = np.ascontiguousarray(self.r, dtype=float)
        t = np.ascontiguousarray(self.t, dtype=float).reshape(-1)
        d = r.shape[0]
        if r.shape != (d, d) or t.shape != (d,):
            raise ValueError(f"inconsistent rigid transform shapes {r.shape} / {t.shape}")
        if not (np.isfinite(r).all() and np.isfinite(t).all() and np.isfinite(self.s)):
            raise ValueError("rigid transform entries must be finite")
        if np.linalg.norm(r.T @ r - np.eye(d)) > 1e-9:
            raise ValueError("r is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > 1e-9:
            raise ValueError("r must have determinant +1")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "s", float(self.s))

    @property
    def dim(self) -> int:
        return self.r.shape[0]

    @classmethod
    def identity(cls, dim: int) -> "RigidTransform":
        return cls(r=np.eye(dim), s=1.0, t=np.zeros(dim))

    def apply(self, pts) -> np.ndarray:
        pts = as_points(pts)
        return self.s * pts @ self.r.T + self.t

    def inverse(self) -> "RigidTransform":
        rinv = self.r.T
        sinv = 1.0 / self.s
        return RigidTransform(r=rinv, s=sinv, t=-sinv * (rinv @ self.t))


@dataclass(frozen=True)
class AffineTransform:
    """z -> B z + t; B need not be invertible, only finite."""

    b: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        b = np.ascontiguousarray(self.b, dtype=float)
        t = np.ascontiguousarray(self.t, dtype=float).reshape(-1)
        d = b.shape[0]
        if b.shape != (d, d) or t.shape != (d,):
            raise ValueError(f"inconsistent affine transform shapes {b.shape} / {t.shape}")
        if not (np.isfinite(b).all() and np.isfinite(t).all()):
            raise ValueError("affine transform entries must be finite")
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "t", t)

    @property
    def dim(self) -> int:
        return self.b.shape[0]

    @classmethod
    def identity(cls, dim: int) -> "AffineTransform":
        return cls(b=np.eye(dim), t=np.zeros(dim))

    def apply(self, pts) -> np.ndarray:
        pts = as_points(pts)
        return pts @ self.b.T + self.t


@dataclass(frozen=True)
class NonRigidField:
    """z -> z + sum_m w_m * exp(-||z - y_m||^2 / (2 beta^2)).

    ``y_ref`` holds the anchor points of the kernel expansion and ``w_coef``
    the per-anchor displacement coefficients. Evaluating at ``y_ref`` itself
    reproduces Y + G W exactly.
    """

    y_ref: np.ndarray
    w_coef: np.ndarray
    beta: float

    def __post_init__(self):
        y = as_points(self.y_ref, "y_ref")
        w = np.ascontiguousarray(self.w_coef, dtype=float)
        if w.shape != y.shape:
            raise ValueError(f"coefficient matrix shape {w.shape} must match anchors {y.shape}")
        if not np.isfinite(w).all():
            raise ValueError("coefficient matrix contains non-finite entries")
        if not (self.beta > 0.0 and np.isfinite(self.beta)):
            raise ValueError(f"kernel width beta must be finite and > 0, got {self.beta}")
        object.__setattr__(self, "y_ref", y)
        object.__setattr__(self, "w_coef", w)
        object.__setattr__(self, "beta", float(self.beta))

    @property
    def dim(self) -> int:
        return self.y_ref.shape[1]

    def displacement(self, pts) -> np.ndarray:
        pts = as_points(pts)
        if pts.shape[1] != self.dim:
            raise ValueError(f"dimension mismatch: {pts.shape[1]} vs field dim {self.dim}")
        return gaussian_affinity(pts, self.y_ref, self.beta) @ self.w_coef

    def apply(self, pts) -> np.ndarray:
        pts = as_points(pts)
        return pts + self.displacement(pts)


@dataclass(frozen=True)
class ComposedFieldTransform:
    """A displacement field estimated in normalized coordinates, mapped back.

    Applies: normalize by the model-side parameters, evaluate the field,
    denormalize by the data-side parameters. ``norm_y``/``norm_x`` carry
    (mu, rho) pairs from the pre-alignment step.
    """

    field: NonRigidField
    norm_x: "object"
    norm_y: "object"

    @property
    def dim(self) -> int:
        return self.field.dim

    def apply(self, pts) -> np.ndarray:
        z = self.norm_y.apply(as_points(pts))
        return self.norm_x.invert(self.field.apply(z))


def apply_transform(t, pts) -> np.ndarray:
    """Apply any transform value to an N x D point set."""
    if not hasattr(t, "apply"):
        raise TypeError(f"not a transform: {type(t).__name__}")
    return t.apply(pts)


def rotation_2d(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def rotation_about_axis(axis, theta: float) -> np.ndarray:
    """3-D rotation by ``theta`` about a (not necessarily unit) axis."""
    u = np.asarray(axis, dtype=float)
    u = u / np.linalg.norm(u)
    ux = np.array([[0.0, -u[2], u[1]], [u[2], 0.0, -u[0]], [-u[1], u[0], 0.0]])
    return np.eye(3) + np.sin(theta) * ux + (1.0 - np.cos(theta)) * (ux @ ux)


def random_rotation(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform-ish random proper rotation via QR of a Gaussian matrix."""
    a = rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0.0:
        q[:, -1] = -q[:, -1]
    return q
