"""Posterior correspondence probabilities and EM objectives.

One point set (``y``, the model) provides the centroids of an isotropic
Gaussian mixture with a shared variance ``sigma2``; the other (``x``, the
data) is treated as samples from that mixture plus a uniform outlier
component of weight ``w``. This module computes the soft-assignment
posteriors and the scalar objectives the registration drivers monitor.

Everything here is a pure function of its inputs. The column-chunked
evaluation uses a fixed block size, so summation order (and therefore the
bit pattern of the result) is reproducible run to run.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial.distance import cdist

from .pointset import as_points, check_same_dim

__all__ = [
    "SIGMA2_FLOOR",
    "MixtureParams",
    "PosteriorStats",
    "init_sigma2",
    "outlier_constant",
    "compute_posteriors",
    "objective_q",
    "negative_log_likelihood",
    "weighted_residual",
    "nll_from_kernel_sums",
]

# Variance floor in normalized units: keeps sigma2 away from 0 when the sets
# align exactly (the closed-form update is exactly 0 at perfect alignment).
SIGMA2_FLOOR = 1e-10

# Data points per evaluation block. Fixed so results are bit-stable.
_BLOCK = 8192

# Largest M*N for which a dense posterior matrix may be materialized.
DENSE_CAP = 10_000_000


@dataclass(frozen=True)
class MixtureParams:
    """Shared mixture variance and outlier weight.

    ``sigma2`` is the isotropic variance of every Gaussian component (squared
    distance units). ``w`` in [0, 1) is the mass of the uniform outlier
    component; ``w = 1`` (all-outlier) is rejected as degenerate.
    """

    sigma2: float
    w: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.sigma2) and self.sigma2 > 0.0):
            raise ValueError(f"sigma2 must be finite and > 0, got {self.sigma2}")
        if not (0.0 <= self.w < 1.0):
            raise ValueError(f"outlier weight w must lie in [0, 1), got {self.w}")


@dataclass
class PosteriorStats:
    """Streamed products of the posterior matrix P (M x N).

    p1[m]   = sum_n P[m, n]          (mass explained by centroid m)
    pt1[n]  = sum_m P[m, n]          (non-outlier mass of data point n)
    px[m]   = sum_n P[m, n] * x[n]   (posterior-weighted data coordinates)
    npost   = total posterior mass over all M Gaussian components
    dense_p = the full M x N matrix, populated only on request
    """

    p1: np.ndarray
    pt1: np.ndarray
    px: np.ndarray
    npost: float
    dense_p: Optional[np.ndarray] = None


def init_sigma2(x, y) -> float:
    """Mean squared pairwise distance between the two sets, divided by D.

    Strictly positive unless every point of both sets coincides, in which
    case the floor value is returned with a warning.
    """
    x = as_points(x, "x")
    y = as_points(y, "y")
    d = check_same_dim(x, y)
    n, m = x.shape[0], y.shape[0]
    # sum_{n,m} ||x_n - y_m||^2 = M*sum||x||^2 + N*sum||y||^2 - 2*sum(x).sum(y)
    total = m * float((x * x).sum()) + n * float((y * y).sum()) - 2.0 * float(x.sum(0) @ y.sum(0))
    sigma2 = max(total, 0.0) / (d * n * m)
    if sigma2 <= SIGMA2_FLOOR:
        warnings.warn("point sets coincide; initial variance clamped to the floor")
        return SIGMA2_FLOOR
    return sigma2


def outlier_constant(params: MixtureParams, m_count: int, n_count: int, dim: int) -> float:
    """Additive constant of the posterior denominator induced by the outlier term.

    c = (2*pi*sigma2)^(D/2) * w/(1-w) * M/N; zero iff w is zero.
    """
    if m_count < 1 or n_count < 1 or dim < 1:
        raise ValueError("m_count, n_count and dim must all be >= 1")
    if params.w == 0.0:
        return 0.0
    return (2.0 * math.pi * params.sigma2) ** (dim / 2.0) * (params.w / (1.0 - params.w)) * (m_count / n_count)


def _posterior_pass(x, t_y, params, want_dense=False, dense_cap=DENSE_CAP):
    """Single streamed pass producing PosteriorStats and the negative log-likelihood.

    The per-column softmax subtracts the column's minimum squared distance
    before exponentiating, and rescales the outlier constant by the same
    factor, which keeps every column finite for arbitrarily small sigma2.
    """
    x = as_points(x, "x")
    t_y = as_points(t_y, "t_y")
    d = check_same_dim(x, t_y)
    n, m = x.shape[0], t_y.shape[0]
    sigma2, w = params.sigma2, params.w
    inv2s = 1.0 / (2.0 * sigma2)

    c = outlier_constant(params, m, n, d)
    log_c = math.log(c) if c > 0.0 else -math.inf

    if want_dense and m * n > dense_cap:
        raise ValueError(f"dense posterior of {m}x{n} exceeds the cap of {dense_cap} entries")

    p1 = np.zeros(m)
    px = np.zeros((m, d))
    pt1 = np.empty(n)
    dense = np.empty((m, n)) if want_dense else None
    # log p(x_n) = log_norm + logaddexp(log sum_m exp(-d^2/2s2), log c)
    log_norm = math.log((1.0 - w) / m) - 0.5 * d * math.log(2.0 * math.pi * sigma2)
    loglik = 0.0

    for lo in range(0, n, _BLOCK):
        hi = min(lo + _BLOCK, n)
        d2 = cdist(t_y, x[lo:hi], "sqeuclidean")
        d2min = d2.min(axis=0)
        num = np.exp(-(d2 - d2min[None, :]) * inv2s)
        sum_num = num.sum(axis=0)
        den = sum_num.copy()
        if c > 0.0:
            # May overflow to inf for points far from every centroid; the
            # resulting zero posteriors are the correct limit.
            with np.errstate(over="ignore"):
                den += np.exp(log_c + d2min * inv2s)
        # Defensive: an all-underflow column with c = 0 cannot occur after the
        # min-subtraction (the minimum term is exp(0) = 1), but keep the
        # uniform fallback anyway.
        zero = den == 0.0
        if zero.any():
            num[:, zero] = 1.0
            sum_num = num.sum(axis=0)
            den = den.copy()
            den[zero] = float(m)
        pcol = num / den[None, :]
        pt1[lo:hi] = pcol.sum(axis=0)
        p1 += pcol.sum(axis=1)
        px += pcol @ x[lo:hi]
        if dense is not None:
            dense[:, lo:hi] = pcol
        with np.errstate(divide="ignore"):
            lse = -d2min * inv2s + np.log(sum_num)
        loglik += float(np.logaddexp(lse, log_c).sum())

    nll = -(log_norm * n + loglik)
    if math.isinf(nll):
        warnings.warn("negative log-likelihood overflowed to +inf")
    npost = float(p1.sum())
    return PosteriorStats(p1=p1, pt1=pt1, px=px, npost=npost, dense_p=dense), nll


def compute_posteriors(x, t_y, params: MixtureParams, want_dense: bool = False) -> PosteriorStats:
    """Posterior products for data ``x`` against transformed centroids ``t_y``.

    Returns the three matrix products and the total posterior mass; the dense
    M x N posterior matrix is materialized only when ``want_dense`` is set
    (and its size is within the diagnostic cap).
    """
    stats, _ = _posterior_pass(x, t_y, params, want_dense=want_dense)
    return stats


def negative_log_likelihood(x, t_y, params: MixtureParams) -> float:
    """Negative log-likelihood of the data under the mixture at ``t_y``.

    Finite whenever w > 0; with w = 0 an (unreachable in practice) total
    underflow yields +inf with a warning rather than an exception.
    """
    _, nll = _posterior_pass(x, t_y, params)
    return nll


def nll_from_kernel_sums(kernel_colsums: np.ndarray, params: MixtureParams, m_count: int, dim: int) -> float:
    """Negative log-likelihood from per-data-point kernel sums sum_m exp(-d^2/2s2).

    Used by the accelerated path, which produces those sums as a by-product.
    A zero sum with w = 0 yields +inf with a warning.
    """
    sums = np.asarray(kernel_colsums, dtype=float)
    n = sums.shape[0]
    c = outlier_constant(params, m_count, n, dim)
    log_norm = math.log((1.0 - params.w) / m_count) - 0.5 * dim * math.log(2.0 * math.pi * params.sigma2)
    with np.errstate(divide="ignore"):
        logs = np.log(np.maximum(sums, 0.0) + c)
    nll = -(log_norm * n + float(logs.sum()))
    if math.isinf(nll):
        warnings.warn("negative log-likelihood overflowed to +inf")
    return nll


def weighted_residual(stats: PosteriorStats, x: np.ndarray, t: np.ndarray) -> float:
    """sum_{m,n} P[m,n] * ||x_n - t_m||^2 evaluated from the streamed products."""
    term_x = float(stats.pt1 @ (x * x).sum(axis=1))
    term_cross = float((stats.px * t).sum())
    term_t = float(stats.p1 @ (t * t).sum(axis=1))
    return term_x - 2.0 * term_cross + term_t


def objective_q(stats: PosteriorStats, x, t_y, sigma2_new: float) -> float:
    """EM upper-bound objective at new parameters, under the dense posterior in ``stats``.

    Q = (1/2*sigma2) * sum_{m,n} P[m,n] ||x_n - t_y_m||^2 + (npost*D/2) * log sigma2.
    Requires the dense posterior (diagnostic path).
    """
    if stats.dense_p is None:
        raise ValueError("objective_q requires PosteriorStats with a dense posterior")
    if not (sigma2_new > 0.0 and math.isfinite(sigma2_new)):
        raise ValueError(f"sigma2_new must be finite and > 0, got {sigma2_new}")
    x = as_points(x, "x")
    t_y = as_points(t_y, "t_y")
    d = check_same_dim(x, t_y)
    d2 = cdist(t_y, x, "sqeuclidean")
    residual = float((stats.dense_p * d2).sum())
    return residual / (2.0 * sigma2_new) + 0.5 * stats.npost * d * math.log(sigma2_new)
