"""Closed-form rigid and affine M-steps and their EM drivers.

Each EM iteration computes soft correspondences against the currently
transformed model set, then re-estimates the transform and the mixture
variance in closed form. Both drivers pre-align the inputs to zero mean and
unit variance and report the recovered transform in original coordinates.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import replace

import numpy as np
from scipy.spatial import cKDTree

from . import estep, fastops
from .config import Correspondence, IterationRecord, RegistrationConfig, RegistrationReport
from .errors import CorrespondenceCollapseError
from .estep import SIGMA2_FLOOR, MixtureParams, PosteriorStats, weighted_residual
from .normalization import NormalizationParams, denormalize_transform, normalize
from .pointset import as_points, check_same_dim
from .transforms import AffineTransform, RigidTransform, apply_transform  # noqa: F401  (re-exported)

__all__ = [
    "solve_rotation",
    "rigid_mstep",
    "affine_mstep",
    "register_rigid",
    "register_affine",
    "apply_transform",
]

# Below this total posterior mass (relative to N) the outlier component has
# absorbed everything and the closed-form updates are meaningless.
_COLLAPSE_FRACTION = 1e-12


def solve_rotation(a) -> np.ndarray:
    """Proper rotation R maximizing trace(A^T R) for a square matrix A.

    R = U C V^T with U S V^T = svd(A) and C = diag(1, ..., 1, det(U V^T)).
    When the two smallest singular values coincide and a reflection must be
    corrected, the maximizer is not unique; one of them is returned with a
    warning.
    """
    a = np.ascontiguousarray(a, dtype=float)
    d = a.shape[0]
    if a.ndim != 2 or a.shape[1] != d:
        raise ValueError("a must be a square matrix")
    if not np.isfinite(a).all():
        raise ValueError("a contains non-finite entries")
    u, sv, vt = np.linalg.svd(a)
    det_uv = float(np.linalg.det(u @ vt))
    signs = np.ones(d)
    if det_uv < 0.0:
        signs[-1] = -1.0
        if d >= 2 and sv[-2] - sv[-1] <= 1e-9 * max(sv[0], 1.0):
            warnings.warn("degenerate trace maximization: tied trailing singular values "
                          "with a reflection correction; the rotation is not unique")
    return (u * signs) @ vt


def rigid_mstep(stats: PosteriorStats, x, y, estimate_scale: bool = True):
    """Optimal (R, s, t) and the updated variance under fixed posteriors.

    With the scale held at 1 the variance update keeps the full quadratic
    residual (the condensed form is only valid at the optimal scale).
    Returns ``(RigidTransform, sigma2)``.
    """
    x = as_points(x, "x")
    y = as_points(y, "y")
    d = check_same_dim(x, y)
    npost = stats.npost
    if npost <= _COLLAPSE_FRACTION * x.shape[0]:
        raise CorrespondenceCollapseError(
            f"correspondence collapse: total posterior mass {npost:.3e} is numerically zero")

    mu_x = x.T @ stats.pt1 / npost
    mu_y = y.T @ stats.p1 / npost
    a = stats.px.T @ y - npost * np.outer(mu_x, mu_y)
    r = solve_rotation(a)
    tr_ar = float((a * r).sum())
    tr_xpx = float(stats.pt1 @ (x * x).sum(axis=1)) - npost * float(mu_x @ mu_x)
    tr_ypy = float(stats.p1 @ (y * y).sum(axis=1)) - npost * float(mu_y @ mu_y)

    if estimate_scale:
        if tr_ypy <= 0.0:
            warnings.warn("model mass concentrated at a single point; scale forced to 1")
            s = 1.0
            sigma2 = (tr_xpx - 2.0 * s * tr_ar + s * s * tr_ypy) / (npost * d)
        else:
            s = tr_ar / tr_ypy
            sigma2 = (tr_xpx - s * tr_ar) / (npost * d)
        if s < 0.0:
            warnings.warn(f"negative scale estimate s = {s:.3e}")
    else:
        s = 1.0
        sigma2 = (tr_xpx - 2.0 * tr_ar + tr_ypy) / (npost * d)

    sigma2 = max(sigma2, SIGMA2_FLOOR)
    t = mu_x - s * (r @ mu_y)
    return RigidTransform(r=r, s=s, t=t), sigma2


def affine_mstep(stats: PosteriorStats, x, y):
    """Optimal (B, t) and the updated variance under fixed posteriors.

    A rank-deficient weighted model covariance is ridged (1e-10 * trace / D)
    with a warning. Returns ``(AffineTransform, sigma2)``.
    """
    x = as_points(x, "x")
    y = as_points(y, "y")
    d = check_same_dim(x, y)
    npost = stats.npost
    if npost <= _COLLAPSE_FRACTION * x.shape[0]:
        raise CorrespondenceCollapseError(
            f"correspondence collapse: total posterior mass {npost:.3e} is numerically zero")

    mu_x = x.T @ stats.pt1 / npost
    mu_y = y.T @ stats.p1 / npost
    a = stats.px.T @ y - npost * np.outer(mu_x, mu_y)
    ypy = (y.T * stats.p1) @ y - npost * np.outer(mu_y, mu_y)

    # cond(ypy) blows up for degenerate model clouds; regularize then.
    if np.linalg.cond(ypy) > 1e12:
        warnings.warn("rank-deficient weighted model covariance; applying ridge")
        ypy = ypy + (1e-10 * np.trace(ypy) / d + np.finfo(float).tiny) * np.eye(d)
    b = np.linalg.solve(ypy, a.T).T
    t = mu_x - b @ mu_y

    tr_xpx = float(stats.pt1 @ (x * x).sum(axis=1)) - npost * float(mu_x @ mu_x)
    sigma2 = (tr_xpx - float((a * b).sum())) / (npost * d)
    sigma2 = max(sigma2, SIGMA2_FLOOR)
    return AffineTransform(b=b, t=t), sigma2


def register_rigid(x, y, config: RegistrationConfig | None = None) -> RegistrationReport:
    """Align model set ``y`` onto data set ``x`` with a rigid (+ optional scale) map."""
    return _register_linear(x, y, config, method="rigid")


def register_affine(x, y, config: RegistrationConfig | None = None) -> RegistrationReport:
    """Align model set ``y`` onto data set ``x`` with an affine map."""
    return _register_linear(x, y, config, method="affine")


def _estep_products(xn, ty, params, config, plan):
    """E-step products plus the entering negative log-likelihood."""
    if plan is None:
        stats, nll = estep._posterior_pass(xn, ty, params)
        return stats, nll
    mode_plan = plan
    if config.fast == "auto":
        scale = math.sqrt(float(((xn - xn.mean(axis=0)) ** 2).sum()) / xn.size)
        mode_plan = replace(plan, mode=fastops.truncation_switch(
            params.sigma2, scale, plan, config.switch_fraction))
    stats, kt1 = fastops._products_with_kernel_sums(xn, ty, params, mode_plan)
    nll = estep.nll_from_kernel_sums(kt1, params, ty.shape[0], xn.shape[1])
    return stats, nll


def _use_accel(config, n, m):
    # Dense products win below this size regardless of the configured mode.
    return config.fast != "exact" and n * m > 250_000


def _hard_assignment(xn, ty):
    """argmax_m P[m, n] per data point: the denominator is shared per column,
    so it is the nearest transformed centroid."""
    _, idx = cKDTree(ty).query(xn)
    return np.asarray(idx, dtype=int)


def _register_linear(x, y, config, method):
    config = config or RegistrationConfig()
    x0 = as_points(x, "x")
    y0 = as_points(y, "y")
    d = check_same_dim(x0, y0)

    t_start = time.perf_counter()
    if config.normalize:
        xn, nx = normalize(x0)
        yn, ny = normalize(y0)
    else:
        xn, nx = x0, NormalizationParams.identity(d)
        yn, ny = y0, NormalizationParams.identity(d)

    plan = fastops.plan_from_config(config) if _use_accel(config, xn.shape[0], yn.shape[0]) else None
    sigma2 = estep.init_sigma2(xn, yn)
    theta = RigidTransform.identity(d) if method == "rigid" else AffineTransform.identity(d)
    ty = yn
    diagnostics = []
    run_warnings = []
    converged = False
    stop_reason = "max_iters"

    for it in range(1, config.max_iters + 1):
        it_start = time.perf_counter()
        params = MixtureParams(sigma2=sigma2, w=config.w)
        stats, nll = _estep_products(xn, ty, params, config, plan)
        if stats.npost <= _COLLAPSE_FRACTION * xn.shape[0]:
            raise CorrespondenceCollapseError(
                f"correspondence collapse at iteration {it}: posterior mass {stats.npost:.3e}")
        q_before = weighted_residual(stats, xn, ty) / (2.0 * sigma2) \
            + 0.5 * stats.npost * d * math.log(sigma2)

        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            if method == "rigid":
                theta_new, sigma2_new = rigid_mstep(stats, xn, yn, estimate_scale=config.estimate_scale)
            else:
                theta_new, sigma2_new = affine_mstep(stats, xn, yn)
        run_warnings.extend(str(w.message) for w in caught)

        ty_new = theta_new.apply(yn)
        q_after = weighted_residual(stats, xn, ty_new) / (2.0 * sigma2_new) \
            + 0.5 * stats.npost * d * math.log(sigma2_new)
        change = float(np.sqrt(((ty_new - ty) ** 2).mean()))
        seconds = 0.0 if config.deterministic else time.perf_counter() - it_start
        diagnostics.append(IterationRecord(
            iteration=it, sigma2=sigma2_new, q_before=q_before, q=q_after,
            nll=nll, change=change, seconds=seconds))

        prev_sigma2 = sigma2
        sigma2, theta, ty = sigma2_new, theta_new, ty_new
        if sigma2 <= SIGMA2_FLOOR:
            converged, stop_reason = True, "sigma2_floor"
            break
        if abs(prev_sigma2 - sigma2) / prev_sigma2 < config.tol:
            converged, stop_reason = True, "sigma2_tol"
            break

    final_params = MixtureParams(sigma2=sigma2, w=config.w)
    stats_final, final_nll = estep._posterior_pass(xn, ty, final_params)
    assignment = _hard_assignment(xn, ty)
    runtime = 0.0 if config.deterministic else time.perf_counter() - t_start

    return RegistrationReport(
        method=method,
        config=config,
        transform=denormalize_transform(theta, nx, ny),
        diagnostics=diagnostics,
        correspondence=Correspondence(assignment=assignment, npost=stats_final.npost),
        sigma2=sigma2,
        nll=final_nll,
        iterations=len(diagnostics),
        converged=converged,
        stop_reason=stop_reason,
        runtime_seconds=runtime,
        norm_x=nx if config.normalize else None,
        norm_y=ny if config.normalize else None,
        warnings=run_warnings,
    )
