"""Nearest-neighbor baseline: classic hard-assignment alignment.

Each iteration matches every transformed model point to its nearest data
point and solves the resulting orthogonal Procrustes problem in closed form.
Serves as the trend baseline for the probabilistic method; it shares the
report schema (the sigma2 diagnostic slot holds the hard-assignment mean
squared distance, and the EM objective fields are NaN).
"""

from __future__ import annotations

import math
import time
import warnings

import numpy as np
from scipy.spatial import cKDTree

from .config import Correspondence, IterationRecord, RegistrationConfig, RegistrationReport
from .estep import SIGMA2_FLOOR
from .normalization import NormalizationParams, denormalize_transform, normalize
from .pointset import as_points, check_same_dim
from .rigid import solve_rotation
from .transforms import RigidTransform

__all__ = ["icp_baseline"]


def icp_baseline(x, y, config: RegistrationConfig | None = None) -> RegistrationReport:
    """Rigid alignment of ``y`` onto ``x`` by iterated nearest-neighbor matching."""
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

    tree = cKDTree(xn)
    theta = RigidTransform.identity(d)
    ty = yn
    diagnostics = []
    run_warnings = []
    converged = False
    stop_reason = "max_iters"
    prev_mse = math.inf

    for it in range(1, config.max_iters + 1):
        it_start = time.perf_counter()
        dist, idx = tree.query(ty)
        matched = xn[idx]
        mse = float((dist ** 2).mean())

        mu_x = matched.mean(axis=0)
        mu_y = yn.mean(axis=0)
        a = (matched - mu_x).T @ (yn - mu_y)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            r = solve_rotation(a)
        run_warnings.extend(str(w.message) for w in caught)
        if config.estimate_scale:
            denom = float(((yn - mu_y) ** 2).sum())
            s = float((a * r).sum()) / denom if denom > 0.0 else 1.0
        else:
            s = 1.0
        t = mu_x - s * (r @ mu_y)
        theta = RigidTransform(r=r, s=s, t=t)
        ty_new = theta.apply(yn)
        change = float(np.sqrt(((ty_new - ty) ** 2).mean()))
        ty = ty_new

        seconds = 0.0 if config.deterministic else time.perf_counter() - it_start
        diagnostics.append(IterationRecord(
            iteration=it, sigma2=max(mse, SIGMA2_FLOOR), q_before=math.nan, q=math.nan,
            nll=math.nan, change=change, seconds=seconds))

        if mse <= SIGMA2_FLOOR:
            converged, stop_reason = True, "mse_floor"
            break
        if math.isfinite(prev_mse) and abs(prev_mse - mse) / prev_mse < config.tol:
            converged, stop_reason = True, "mse_tol"
            break
        prev_mse = mse

    final_dist, _ = tree.query(ty)
    _, assignment = cKDTree(ty).query(xn)
    runtime = 0.0 if config.deterministic else time.perf_counter() - t_start

    return RegistrationReport(
        method="icp",
        config=config,
        transform=denormalize_transform(theta, nx, ny),
        diagnostics=diagnostics,
        correspondence=Correspondence(assignment=np.asarray(assignment, dtype=int),
                                      npost=float(xn.shape[0])),
        sigma2=max(float((final_dist ** 2).mean()), SIGMA2_FLOOR),
        nll=math.nan,
        iterations=len(diagnostics),
        converged=converged,
        stop_reason=stop_reason,
        runtime_seconds=runtime,
        norm_x=nx if config.normalize else None,
        norm_y=ny if config.normalize else None,
        warnings=run_warnings,
    )
