"""Seeded synthetic registration pairs with controlled degradations.

A pair is built from a base set: the ground-truth transform produces the
data set, then missing regions, coordinate noise and appended outliers
degrade either side. Everything is a pure function of the spec's seed, so a
pair can be regenerated exactly. The ground truth records the applied
transform (for linear kinds) and the index correspondence that survived the
degradations.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .config import transform_from_dict, transform_to_dict
from .pointset import as_points
from .transforms import AffineTransform, RigidTransform, gaussian_affinity

__all__ = ["MissingRegion", "DegradationSpec", "GroundTruth", "synth_pair", "rbf_deformation"]

_TARGETS = ("x", "y", "both")
_KINDS = ("rigid", "affine", "nonrigid")


@dataclass(frozen=True)
class MissingRegion:
    """Remove the given fraction of one set from one side of one axis."""

    target: str
    axis: int
    side: str
    fraction: float

    def __post_init__(self):
        if self.target not in ("x", "y"):
            raise ValueError("target must be 'x' or 'y'")
        if self.side not in ("low", "high"):
            raise ValueError("side must be 'low' or 'high'")
        if not (0.0 < self.fraction < 1.0):
            raise ValueError("fraction must lie in (0, 1)")


@dataclass(frozen=True)
class DegradationSpec:
    """Degradation axes of a synthetic pair; the seed fixes it exactly.

    ``deform_std`` drives the control-grid perturbation for the non-rigid
    kind and the matrix perturbation for the affine kind. Outliers are drawn
    from a normal distribution of std ``outlier_std`` around the target
    set's centroid.
    """

    deform_std: float = 0.0
    noise_std: float = 0.0
    outlier_count: int = 0
    outlier_std: float = 1.0
    missing: tuple = ()
    rotation_deg: float = 0.0
    scale: float = 1.0
    translation_std: float = 0.0
    noise_target: str = "x"
    outlier_target: str = "x"
    seed: int = 0

    def __post_init__(self):
        if min(self.deform_std, self.noise_std, self.outlier_std, self.translation_std) < 0:
            raise ValueError("degradation levels must be nonnegative")
        if self.outlier_count < 0:
            raise ValueError("outlier_count must be nonnegative")
        if self.scale <= 0.0:
            raise ValueError("scale must be > 0")
        if self.noise_target not in _TARGETS or self.outlier_target not in _TARGETS:
            raise ValueError(f"targets must be one of {_TARGETS}")
        object.__setattr__(self, "missing", tuple(self.missing))


@dataclass
class GroundTruth:
    """What a registration run against this pair should recover."""

    kind: str
    transform: Optional[object]
    x_indices: np.ndarray
    y_indices: np.ndarray

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "transform": None if self.transform is None else transform_to_dict(self.transform),
            "x_indices": self.x_indices.tolist(),
            "y_indices": self.y_indices.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GroundTruth":
        return cls(
            kind=d["kind"],
            transform=None if d["transform"] is None else transform_from_dict(d["transform"]),
            x_indices=np.asarray(d["x_indices"], dtype=int),
            y_indices=np.asarray(d["y_indices"], dtype=int),
        )


def _planar_rotation(dim: int, theta: float, rng: np.random.Generator) -> np.ndarray:
    """Rotation by ``theta`` in a random 2-plane (any dimension >= 2)."""
    if dim == 1:
        return np.eye(1)
    basis = np.linalg.qr(rng.standard_normal((dim, 2)))[0]
    u, v = basis[:, 0], basis[:, 1]
    return (np.eye(dim)
            + (np.cos(theta) - 1.0) * (np.outer(u, u) + np.outer(v, v))
            + np.sin(theta) * (np.outer(v, u) - np.outer(u, v)))


def rbf_deformation(points: np.ndarray, level: float, rng: np.random.Generator) -> np.ndarray:
    """Smooth displacement field: perturbed control grid, Gaussian-kernel interpolation.

    The grid spans the bounding box with 4 nodes per axis in 2-D and 3
    otherwise; node perturbations are i.i.d. normal with std ``level`` and
    interpolated exactly at the nodes (kernel width = grid spacing).
    """
    pts = as_points(points)
    n, d = pts.shape
    if level == 0.0:
        return np.zeros_like(pts)
    per_axis = 4 if d == 2 else 3
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    pad = 0.05 * np.maximum(hi - lo, 1e-9)
    axes = [np.linspace(lo[i] - pad[i], hi[i] + pad[i], per_axis) for i in range(d)]
    nodes = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    spacing = float(max((hi[i] - lo[i] + 2 * pad[i]) / (per_axis - 1) for i in range(d)))
    perturb = level * rng.standard_normal(nodes.shape)
    phi = gaussian_affinity(nodes, nodes, spacing)
    weights = np.linalg.solve(phi + 1e-10 * np.eye(nodes.shape[0]), perturb)
    return gaussian_affinity(pts, nodes, spacing) @ weights


def synth_pair(spec: DegradationSpec, base, transform_kind: str):
    """Deterministic degraded pair (x, y, ground_truth) from a base set.

    ``y`` descends from the base model set and ``x`` from its ground-truth
    image (for the non-rigid kind the model side is deformed instead, so a
    zero deformation level leaves ``y`` equal to the base).
    """
    if transform_kind not in _KINDS:
        raise ValueError(f"transform_kind must be one of {_KINDS}")
    base = as_points(base, "base")
    n, d = base.shape
    rng = np.random.default_rng(spec.seed)

    transform = None
    if transform_kind == "rigid":
        r = _planar_rotation(d, np.deg2rad(spec.rotation_deg), rng)
        t = spec.translation_std * rng.standard_normal(d)
        transform = RigidTransform(r=r, s=spec.scale, t=t)
        x_clean = transform.apply(base)
        y_clean = base.copy()
    elif transform_kind == "affine":
        r = _planar_rotation(d, np.deg2rad(spec.rotation_deg), rng)
        while True:
            b = r @ (np.eye(d) + spec.deform_std * rng.standard_normal((d, d)))
            if np.linalg.det(b) > 0.05:
                break
        t = spec.translation_std * rng.standard_normal(d)
        transform = AffineTransform(b=b, t=t)
        x_clean = transform.apply(base)
        y_clean = base.copy()
    else:
        y_clean = base + rbf_deformation(base, spec.deform_std, rng)
        x_clean = base.copy()

    x, x_orig = x_clean, np.arange(n)
    y, y_orig = y_clean, np.arange(n)
    for region in spec.missing:
        if region.target == "x":
            x, x_orig = _remove_region(x, x_orig, region)
        else:
            y, y_orig = _remove_region(y, y_orig, region)
    if x.shape[0] == 0 or y.shape[0] == 0:
        raise ValueError("missing regions removed all points")

    if spec.noise_std > 0.0:
        if spec.noise_target in ("x", "both"):
            x = x + spec.noise_std * rng.standard_normal(x.shape)
        if spec.noise_target in ("y", "both"):
            y = y + spec.noise_std * rng.standard_normal(y.shape)

    if spec.outlier_count > 0:
        if spec.outlier_target in ("x", "both"):
            x = np.vstack([x, _draw_outliers(x, spec, rng)])
        if spec.outlier_target in ("y", "both"):
            y = np.vstack([y, _draw_outliers(y, spec, rng)])

    # Correspondence among surviving original indices, as positions in the
    # degraded arrays (outliers have no correspondence).
    common = np.intersect1d(x_orig, y_orig)
    x_pos = {orig: i for i, orig in enumerate(x_orig)}
    y_pos = {orig: i for i, orig in enumerate(y_orig)}
    truth = GroundTruth(
        kind=transform_kind,
        transform=transform,
        x_indices=np.asarray([x_pos[o] for o in common], dtype=int),
        y_indices=np.asarray([y_pos[o] for o in common], dtype=int),
    )
    return x, y, truth


def _remove_region(pts, orig, region: MissingRegion):
    coords = pts[:, region.axis]
    if region.side == "low":
        threshold = np.quantile(coords, region.fraction)
        keep = coords >= threshold
    else:
        threshold = np.quantile(coords, 1.0 - region.fraction)
        keep = coords <= threshold
    return pts[keep], orig[keep]


def _draw_outliers(pts, spec: DegradationSpec, rng: np.random.Generator):
    center = pts.mean(axis=0)
    return center + spec.outlier_std * rng.standard_normal((spec.outlier_count, pts.shape[1]))
