"""Run configuration, per-iteration diagnostics and the registration report.

Reports serialize to JSON and back without loss; transform values are stored
as tagged dictionaries.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .normalization import NormalizationParams
from .transforms import AffineTransform, ComposedFieldTransform, NonRigidField, RigidTransform

__all__ = [
    "RegistrationConfig",
    "IterationRecord",
    "Correspondence",
    "RegistrationReport",
    "transform_to_dict",
    "transform_from_dict",
]

_FAST_MODES = ("exact", "fgt", "auto")


@dataclass(frozen=True)
class RegistrationConfig:
    """Knobs shared by every registration driver.

    ``w`` is the outlier weight; ``lam`` and ``beta`` control the non-rigid
    smoothness (trade-off strength and kernel width, in normalized units).
    Iteration stops when the relative change of sigma2 drops below ``tol``,
    the iteration cap is hit, or sigma2 reaches its floor.

    ``fast`` selects the E-step backend: "exact" (dense products), "fgt"
    (clustered series expansion), or "auto" (expansion while sigma is large,
    radius-truncated sums once it is small). ``lowrank`` bounds the rank of
    the kernel approximation for the non-rigid solve: None picks a dense
    solve for small sets and rank 100 beyond, 0 forces dense, a positive K
    forces rank K.
    """

    w: float = 0.0
    lam: float = 2.0
    beta: float = 2.0
    tol: float = 1e-8
    max_iters: int = 150
    estimate_scale: bool = True
    normalize: bool = True
    fast: str = "exact"
    lowrank: Optional[int] = None
    inner_solver_iters: int = 1
    fgt_ratio: float = 8.0
    fgt_centers: int = 80
    fgt_order: int = 5
    fgt_eps: float = 1e-4
    trunc_radius: float = 5.0
    switch_fraction: float = 0.01
    deterministic: bool = False
    seed: Optional[int] = None

    def __post_init__(self):
        if not (0.0 <= self.w < 1.0):
            raise ValueError(f"w must lie in [0, 1), got {self.w}")
        if self.lam <= 0.0 or self.beta <= 0.0:
            raise ValueError("lam and beta must be > 0")
        if self.tol <= 0.0 or self.max_iters < 1:
            raise ValueError("tol must be > 0 and max_iters >= 1")
        if self.fast not in _FAST_MODES:
            raise ValueError(f"fast must be one of {_FAST_MODES}, got {self.fast!r}")
        if self.lowrank is not None and self.lowrank < 0:
            raise ValueError("lowrank must be None, 0 or a positive rank")
        if self.inner_solver_iters < 1:
            raise ValueError("inner_solver_iters must be >= 1")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RegistrationConfig":
        return cls(**d)


@dataclass(frozen=True)
class IterationRecord:
    """One EM iteration: objective before/after the M-step and bookkeeping.

    ``q_before`` and ``q`` are evaluated under the same posteriors, at the
    parameters entering and leaving the iteration; ``nll`` is the negative
    log-likelihood at the entering parameters. ``change`` is the RMS movement
    of the transformed model points. For the nearest-neighbor baseline the
    sigma2 slot holds the hard-assignment mean squared distance and the
    objective fields are NaN.
    """

    iteration: int
    sigma2: float
    q_before: float
    q: float
    nll: float
    change: float
    seconds: float


@dataclass
class Correspondence:
    """Hard assignment (index of the best centroid per data point) plus total mass."""

    assignment: np.ndarray
    npost: float


@dataclass
class RegistrationReport:
    """Everything a registration run produced, in original coordinates."""

    method: str
    config: RegistrationConfig
    transform: object
    diagnostics: list
    correspondence: Correspondence
    sigma2: float
    nll: float
    iterations: int
    converged: bool
    stop_reason: str
    runtime_seconds: float
    norm_x: Optional[NormalizationParams] = None
    norm_y: Optional[NormalizationParams] = None
    warnings: list = field(default_factory=list)
    metrics: Optional[dict] = None

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "config": self.config.to_dict(),
            "transform": transform_to_dict(self.transform),
            "diagnostics": [dataclasses.asdict(r) for r in self.diagnostics],
            "correspondence": {
                "assignment": self.correspondence.assignment.tolist(),
                "npost": self.correspondence.npost,
            },
            "sigma2": self.sigma2,
            "nll": self.nll,
            "iterations": self.iterations,
            "converged": self.converged,
            "stop_reason": self.stop_reason,
            "runtime_seconds": self.runtime_seconds,
            "norm_x": _norm_to_dict(self.norm_x),
            "norm_y": _norm_to_dict(self.norm_y),
            "warnings": list(self.warnings),
            "metrics": self.metrics,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RegistrationReport":
        return cls(
            method=d["method"],
            config=RegistrationConfig.from_dict(d["config"]),
            transform=transform_from_dict(d["transform"]),
            diagnostics=[IterationRecord(**r) for r in d["diagnostics"]],
            correspondence=Correspondence(
                assignment=np.asarray(d["correspondence"]["assignment"], dtype=int),
                npost=d["correspondence"]["npost"],
            ),
            sigma2=d["sigma2"],
            nll=d["nll"],
            iterations=d["iterations"],
            converged=d["converged"],
            stop_reason=d["stop_reason"],
            runtime_seconds=d["runtime_seconds"],
            norm_x=_norm_from_dict(d["norm_x"]),
            norm_y=_norm_from_dict(d["norm_y"]),
            warnings=list(d["warnings"]),
            metrics=d["metrics"],
        )

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    @classmethod
    def from_json(cls, text: str) -> "RegistrationReport":
        return cls.from_dict(json.loads(text))


def _norm_to_dict(n: Optional[NormalizationParams]) -> Optional[dict]:
    if n is None:
        return None
    return {"mu": n.mu.tolist(), "rho": n.rho}


def _norm_from_dict(d: Optional[dict]) -> Optional[NormalizationParams]:
    if d is None:
        return None
    return NormalizationParams(mu=np.asarray(d["mu"], dtype=float), rho=d["rho"])


def transform_to_dict(t) -> dict:
    if isinstance(t, RigidTransform):
        return {"kind": "rigid", "r": t.r.tolist(), "s": t.s, "t": t.t.tolist()}
    if isinstance(t, AffineTransform):
        return {"kind": "affine", "b": t.b.tolist(), "t": t.t.tolist()}
    if isinstance(t, NonRigidField):
        return {
            "kind": "field",
            "y_ref": t.y_ref.tolist(),
            "w_coef": t.w_coef.tolist(),
            "beta": t.beta,
        }
    if isinstance(t, ComposedFieldTransform):
        return {
            "kind": "composed_field",
            "field": transform_to_dict(t.field),
            "norm_x": _norm_to_dict(t.norm_x),
            "norm_y": _norm_to_dict(t.norm_y),
        }
    raise TypeError(f"cannot serialize transform of type {type(t).__name__}")


def transform_from_dict(d: dict):
    kind = d["kind"]
    if kind == "rigid":
        return RigidTransform(r=np.asarray(d["r"], dtype=float), s=d["s"], t=np.asarray(d["t"], dtype=float))
    if kind == "affine":
        return AffineTransform(b=np.asarray(d["b"], dtype=float), t=np.asarray(d["t"], dtype=float))
    if kind == "field":
        return NonRigidField(
            y_ref=np.asarray(d["y_ref"], dtype=float),
            w_coef=np.asarray(d["w_coef"], dtype=float),
            beta=d["beta"],
        )
    if kind == "composed_field":
        return ComposedFieldTransform(
            field=transform_from_dict(d["field"]),
            norm_x=_norm_from_dict(d["norm_x"]),
            norm_y=_norm_from_dict(d["norm_y"]),
        )
    raise ValueError(f"unknown transform kind {kind!r}")
