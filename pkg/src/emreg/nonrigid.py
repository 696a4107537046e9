"""Kernel-regularized non-rigid registration.

The displacement of the model set is parameterized as a Gaussian-kernel
expansion anchored at the model points, T(Y) = Y + G W, where G is the M x M
kernel matrix with width ``beta``. Each EM iteration solves the regularized
linear system for the coefficient matrix W (a single pass per iteration:
the M-step decreases, rather than exactly minimizes, the EM bound) and then
updates the mixture variance in closed form.

The coefficient system is solved in the diagonally rescaled form
(d(P1) G + lambda sigma2 I) W = P X - d(P1) Y, which is equivalent to the
unscaled form whenever every entry of P1 is positive and remains
well-defined when some centroid explains nothing (its coefficients are then
driven to zero influence).
"""

from __future__ import annotations

import math
import time
import warnings

import numpy as np

from . import estep, fastops
from .config import Correspondence, IterationRecord, RegistrationConfig, RegistrationReport
from .errors import CorrespondenceCollapseError
from .estep import SIGMA2_FLOOR, MixtureParams, PosteriorStats, weighted_residual
from .normalization import NormalizationParams, denormalize_transform, normalize
from .pointset import as_points, check_same_dim
from .rigid import _estep_products, _hard_assignment, _use_accel
from .transforms import NonRigidField, gaussian_affinity

__all__ = [
    "build_kernel",
    "solve_coefficients",
    "transform_points",
    "update_sigma2",
    "register_nonrigid",
]

# Dense coefficient solves up to this many anchors; low-rank beyond.
_DENSE_SOLVE_LIMIT = 3000
_LOWRANK_DEFAULT = 100


def build_kernel(y, beta: float) -> np.ndarray:
    """Gaussian affinity matrix among the anchor points.

    g[i, j] = exp(-||y_i - y_j||^2 / (2 beta^2)): symmetric, unit diagonal,
    entries in (0, 1], positive semidefinite.
    """
    if not (beta > 0.0 and math.isfinite(beta)):
        raise ValueError(f"kernel width beta must be finite and > 0, got {beta}")
    y = as_points(y, "y")
    return gaussian_affinity(y, y, beta)


def solve_coefficients(g, stats: PosteriorStats, x, y, lam: float, sigma2: float) -> np.ndarray:
    """Coefficient matrix W of the regularized displacement solve.

    Solves (d(P1) G + lam * sigma2 * I) W = P X - d(P1) Y. Raises on a
    non-finite solution with a condition estimate.
    """
    if not (lam > 0.0 and math.isfinite(lam)):
        raise ValueError(f"lam must be finite and > 0, got {lam}")
    if not (sigma2 > 0.0 and math.isfinite(sigma2)):
        raise ValueError(f"sigma2 must be finite and > 0, got {sigma2}")
    g = np.ascontiguousarray(g, dtype=float)
    x = as_points(x, "x")
    y = as_points(y, "y")
    m = y.shape[0]
    if g.shape != (m, m):
        raise ValueError(f"kernel matrix shape {g.shape} does not match {m} anchors")
    lhs = stats.p1[:, None] * g + (lam * sigma2) * np.eye(m)
    rhs = stats.px - stats.p1[:, None] * y
    w = np.linalg.solve(lhs, rhs)
    if not np.isfinite(w).all():
        cond = np.linalg.cond(lhs)
        raise np.linalg.LinAlgError(f"non-finite coefficient solve (cond ~ {cond:.3e})")
    return w


def transform_points(field: NonRigidField, z) -> np.ndarray:
    """Evaluate the displacement field at arbitrary points: z + v(z)."""
    return field.apply(z)


def update_sigma2(stats: PosteriorStats, x, t) -> float:
    """Closed-form variance update at the current transformed model points.

    sigma2 = residual / (npost * D) with residual = sum_{m,n} P[m,n]
    ||x_n - t_m||^2 assembled from the streamed products; clamped to the
    floor. Mild negative cancellation triggers a compensated recomputation;
    anything beyond that is an error.
    """
    x = as_points(x, "x")
    t = as_points(t, "t")
    d = check_same_dim(x, t)
    if stats.npost <= 0.0:
        raise CorrespondenceCollapseError("total posterior mass is zero")
    residual = weighted_residual(stats, x, t)
    if residual < 0.0:
        scale = float(stats.pt1 @ (x * x).sum(axis=1)) + 1.0
        if residual < -1e-9 * scale:
            residual = _compensated_residual(stats, x, t)
            if residual < -1e-9 * scale:
                raise ValueError(f"negative weighted residual {residual:.3e} beyond cancellation tolerance")
        residual = max(residual, 0.0)
    return max(residual / (stats.npost * d), SIGMA2_FLOOR)


def _compensated_residual(stats, x, t):
    terms = np.concatenate([
        stats.pt1 * (x * x).sum(axis=1),
        (-2.0 * stats.px * t).ravel(),
        stats.p1 * (t * t).sum(axis=1),
    ])
    return float(math.fsum(terms.tolist()))


def register_nonrigid(x, y, config: RegistrationConfig | None = None) -> RegistrationReport:
    """Align model set ``y`` onto data set ``x`` with a smooth displacement field.

    Runs in normalized coordinates; the returned transform is the composite
    map (normalize, displace, denormalize) so it applies to original-unit
    points, and its ``field`` attribute carries the normalized-space
    expansion (anchors, coefficients, width).
    """
    config = config or RegistrationConfig()
    x0 = as_points(x, "x")
    y0 = as_points(y, "y")
    d = check_same_dim(x0, y0)
    m = y0.shape[0]

    t_start = time.perf_counter()
    if config.normalize:
        xn, nx = normalize(x0)
        yn, ny = normalize(y0)
    else:
        xn, nx = x0, NormalizationParams.identity(d)
        yn, ny = y0, NormalizationParams.identity(d)

    run_warnings = []
    lowrank = config.lowrank
    if lowrank is None:
        lowrank = 0 if m <= _DENSE_SOLVE_LIMIT else min(_LOWRANK_DEFAULT, m)
    use_lowrank = lowrank > 0 and lowrank < m

    gram = build_kernel(yn, config.beta)
    lr = None
    if use_lowrank:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            lr = fastops.topk_eigs(gram, lowrank, tol=1e-6)
        run_warnings.extend(str(w.message) for w in caught)
        gram = None  # the dense matrix is only needed to seed the eigensolver

    plan = fastops.plan_from_config(config) if _use_accel(config, xn.shape[0], m) else None
    sigma2 = estep.init_sigma2(xn, yn)
    w_coef = np.zeros((m, d))
    ty = yn.copy()
    diagnostics = []
    converged = False
    stop_reason = "max_iters"

    def kernel_apply(wmat):
        return lr.matvec(wmat) if use_lowrank else gram @ wmat

    def bending(wmat):
        if use_lowrank:
            proj = lr.q.T @ wmat
            return float((proj * (lr.lam[:, None] * proj)).sum())
        return float((wmat * (gram @ wmat)).sum())

    for it in range(1, config.max_iters + 1):
        it_start = time.perf_counter()
        ty_entry = ty
        params = MixtureParams(sigma2=sigma2, w=config.w)
        stats, nll = _estep_products(xn, ty, params, config, plan)
        if stats.npost <= 1e-12 * xn.shape[0]:
            raise CorrespondenceCollapseError(
                f"correspondence collapse at iteration {it}: posterior mass {stats.npost:.3e}")

        q_before = weighted_residual(stats, xn, ty) / (2.0 * sigma2) \
            + 0.5 * stats.npost * d * math.log(sigma2) \
            + 0.5 * config.lam * bending(w_coef)

        sigma2_new = sigma2
        for _ in range(config.inner_solver_iters):
            rhs = stats.px - stats.p1[:, None] * yn
            if use_lowrank:
                w_coef = fastops.woodbury_solve(lr, stats.p1, config.lam * sigma2_new, rhs)
            else:
                w_coef = solve_coefficients(gram, stats, xn, yn, config.lam, sigma2_new)
            ty = yn + kernel_apply(w_coef)
            sigma2_new = update_sigma2(stats, xn, ty)

        q_after = weighted_residual(stats, xn, ty) / (2.0 * sigma2_new) \
            + 0.5 * stats.npost * d * math.log(sigma2_new) \
            + 0.5 * config.lam * bending(w_coef)
        change = float(np.sqrt(((ty - ty_entry) ** 2).mean()))
        seconds = 0.0 if config.deterministic else time.perf_counter() - it_start
        diagnostics.append(IterationRecord(
            iteration=it, sigma2=sigma2_new, q_before=q_before, q=q_after,
            nll=nll, change=change, seconds=seconds))

        prev_sigma2 = sigma2
        sigma2 = sigma2_new
        if sigma2 <= SIGMA2_FLOOR:
            converged, stop_reason = True, "sigma2_floor"
            break
        if abs(prev_sigma2 - sigma2) / prev_sigma2 < config.tol:
            converged, stop_reason = True, "sigma2_tol"
            break

    field = NonRigidField(y_ref=yn, w_coef=w_coef, beta=config.beta)
    final_params = MixtureParams(sigma2=sigma2, w=config.w)
    stats_final, final_nll = estep._posterior_pass(xn, ty, final_params)
    assignment = _hard_assignment(xn, ty)
    runtime = 0.0 if config.deterministic else time.perf_counter() - t_start

    return RegistrationReport(
        method="nonrigid",
        config=config,
        transform=denormalize_transform(field, nx, ny),
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
