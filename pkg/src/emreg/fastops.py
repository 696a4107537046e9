"""Fast kernel sums and low-rank kernel solves.

Three evaluation modes for discrete Gauss transforms f(t) = sum_j z_j *
exp(-||t - s_j||^2 / (2 sigma2)):

* ``exact``      -- blocked dense evaluation, O(M N).
* ``fgt``        -- sources are grouped around a small set of centers and each
                    group's field is replaced by a truncated Hermite-function
                    series about its center; targets beyond the far-field
                    radius of a center skip that group entirely.
* ``truncated``  -- for small sigma: contributions beyond a cutoff radius are
                    zeroed and the remaining near pairs are found by grid
                    binning.

The series error is controlled against ``target_accuracy``: a numerically
tabulated worst-case truncation error B(rho, p) (rho = cluster radius over
bandwidth, p = retained total degree) drives the per-cluster expansion order,
and the center set is grown past the configured count when no admissible
order exists. If the geometry degenerates (centers would approach the source
count), evaluation silently falls back to the exact mode with a warning. The
guarantee, for every mode, is ``|result - exact|_inf <= eps * ||z||_1``.

The module also hosts the low-rank symmetric eigensolver (power iteration
with Hotelling deflation, refined by blocked Rayleigh-Ritz sweeps) and the
Woodbury-identity solve used by the non-rigid driver.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from scipy.spatial.distance import cdist

from .errors import EigenConvergenceError
from .estep import MixtureParams, PosteriorStats, outlier_constant
from .pointset import as_points, check_same_dim

__all__ = [
    "GaussTransformPlan",
    "gauss_transform",
    "posterior_products_fast",
    "truncation_switch",
    "LowRankKernel",
    "topk_eigs",
    "woodbury_solve",
]

_MODES = ("exact", "fgt", "truncated")
_ORDER_CAP = 30          # largest retained total degree
_RHO_STEP = 0.05         # resolution of the truncation-error table
_RHO_MAX = 4.0
_SAFETY = 1.25           # headroom on the tabulated bound
_PAIR_BUDGET = 20_000_000
_EVAL_BLOCK = 3_000_000  # cap on (series terms) x (targets) scratch


@dataclass(frozen=True)
class GaussTransformPlan:
    """How to evaluate Gaussian kernel sums.

    ``target_accuracy`` is an absolute sup-norm bound per unit L1 weight.
    ``far_field_ratio`` (in bandwidth units), ``center_count`` and
    ``truncation_order`` shape the series mode: the order is a minimum that
    is raised, and the center count a baseline that is grown, whenever the
    accuracy target demands it. ``truncation_radius`` (in sigma units) is the
    cutoff of the truncated mode.
    """

    mode: str = "fgt"
    target_accuracy: float = 1e-4
    far_field_ratio: float = 8.0
    center_count: int = 80
    truncation_order: int = 5
    truncation_radius: float = 5.0

    def __post_init__(self):
        if self.mode not in _MODES:
            raise ValueError(f"mode must be one of {_MODES}, got {self.mode!r}")
        if not (self.target_accuracy > 0.0):
            raise ValueError("target_accuracy must be > 0")
        if self.truncation_order < 1:
            raise ValueError("truncation_order must be >= 1")
        if self.center_count < 1:
            raise ValueError("center_count must be >= 1")
        if self.far_field_ratio <= 0.0 or self.truncation_radius <= 0.0:
            raise ValueError("far_field_ratio and truncation_radius must be > 0")


def truncation_switch(sigma2: float, data_scale: float, plan: GaussTransformPlan,
                      switch_fraction: float = 0.01) -> str:
    """Pick the small-sigma mode: "truncated" once sigma drops below
    ``switch_fraction`` of the data scale, else "fgt"."""
    if math.sqrt(sigma2) < switch_fraction * data_scale:
        return "truncated"
    return "fgt"


# --------------------------------------------------------------------------
# Truncation-error table for the Hermite-function series.
#
# For a unit-weight source at offset u from its center (lengths in bandwidth
# units) the field exp(-||v - u||^2) expands as sum_alpha (u^alpha/alpha!)
# h_alpha(v) with h_alpha the Hermite functions. Truncation by total degree
# is equivariant under simultaneous rotation of u and v, so the worst-case
# error of retaining degrees < p depends only on rho = |u|, and the
# multivariate supremum equals the one-dimensional one. B(rho, p) below is
# that supremum, evaluated numerically on a dense axis grid.
# --------------------------------------------------------------------------

@lru_cache(maxsize=256)
def _trunc_sup_errors(rho_key: int) -> np.ndarray:
    """sup_v |exp(-(v-rho)^2) - sum_{n<p} rho^n/n! h_n(v)| for p = 0.._ORDER_CAP."""
    rho = rho_key * _RHO_STEP
    v = np.arange(-(rho + 7.0), rho + 7.0 + 1e-9, 0.02)
    truth = np.exp(-((v - rho) ** 2))
    # h_n(v) = exp(-v^2) H_n(v); H_{n+1} = 2 v H_n - 2 n H_{n-1}
    gauss = np.exp(-(v ** 2))
    h_prev = np.zeros_like(v)
    h_curr = np.ones_like(v)  # H_0
    coef = 1.0                # rho^n / n!
    partial = np.zeros_like(v)
    sups = np.empty(_ORDER_CAP + 1)
    sups[0] = np.abs(truth).max()
    for n in range(_ORDER_CAP):
        partial = partial + coef * gauss * h_curr
        sups[n + 1] = np.abs(truth - partial).max()
        h_prev, h_curr = h_curr, 2.0 * v * h_curr - 2.0 * n * h_prev
        coef *= rho / (n + 1)
    return sups


def _trunc_bound(rho: float, order: int) -> float:
    """Safe worst-case series error for cluster radius ``rho`` (bandwidth units)."""
    if rho <= 0.0:
        return 0.0
    key = min(int(math.ceil(rho / _RHO_STEP)), int(_RHO_MAX / _RHO_STEP))
    if rho > _RHO_MAX:
        return math.inf
    return _SAFETY * float(_trunc_sup_errors(key)[min(order, _ORDER_CAP)])


def _required_order(rho: float, eps: float, base: int) -> int | None:
    """Smallest admissible total degree >= ``base``, or None if the cap fails."""
    if rho <= 0.0:
        return base
    if rho > _RHO_MAX:
        return None
    key = min(int(math.ceil(rho / _RHO_STEP)), int(_RHO_MAX / _RHO_STEP))
    sups = _SAFETY * _trunc_sup_errors(key)
    for p in range(base, _ORDER_CAP + 1):
        if sups[p] <= eps:
            return p
    return None


# --------------------------------------------------------------------------
# Graded multi-index bookkeeping. Indices of total degree < p are ordered so
# every index derives from an earlier one by one extra factor in a single
# dimension, which lets product tables be built with one multiply per index.
# --------------------------------------------------------------------------

@lru_cache(maxsize=128)
def _graded_indices(dim: int, order: int):
    alphas = [(0,) * dim]
    seen = {alphas[0]: 0}
    parent = [0]
    fdim = [0]
    ford = [0]
    for degree in range(1, order):
        for alpha in list(alphas):
            if sum(alpha) != degree - 1:
                continue
            last = max((d for d in range(dim) if alpha[d] > 0), default=-1)
            first_free = last if last >= 0 else 0
            for d in range(first_free, dim):
                new = tuple(a + (1 if i == d else 0) for i, a in enumerate(alpha))
                if new in seen:
                    continue
                seen[new] = len(alphas)
                # factor = full per-dim order of the last dimension, removed at once
                base = tuple(a if i != d else 0 for i, a in enumerate(new))
                alphas.append(new)
                parent.append(seen[base])
                fdim.append(d)
                ford.append(new[d])
    alpha_arr = np.array(alphas, dtype=np.int64)
    from math import factorial

    inv_fact = np.array([1.0 / np.prod([float(factorial(a)) for a in al]) for al in alphas])
    return (
        alpha_arr,
        np.array(parent, dtype=np.int64),
        np.array(fdim, dtype=np.int64),
        np.array(ford, dtype=np.int64),
        inv_fact,
    )


def _product_table(parent, fdim, ford, per_dim_tables, count):
    """Rows of prod_d table[d][alpha_d] for every graded index, one multiply each."""
    g = parent.shape[0]
    out = np.empty((g, count))
    out[0] = 1.0
    for i in range(1, g):
        out[i] = out[parent[i]] * per_dim_tables[fdim[i]][ford[i]]
    return out


def _power_tables(u: np.ndarray, order: int):
    """Per-dimension tables of u^j for j < order."""
    tabs = []
    for d in range(u.shape[1]):
        t = np.empty((order, u.shape[0]))
        t[0] = 1.0
        for j in range(1, order):
            t[j] = t[j - 1] * u[:, d]
        tabs.append(t)
    return tabs


def _hermite_tables(v: np.ndarray, order: int):
    """Per-dimension tables of Hermite polynomials H_j(v) for j < order."""
    tabs = []
    for d in range(v.shape[1]):
        t = np.empty((order, v.shape[0]))
        t[0] = 1.0
        if order > 1:
            t[1] = 2.0 * v[:, d]
        for j in range(2, order):
            t[j] = 2.0 * v[:, d] * t[j - 1] - 2.0 * (j - 1) * t[j - 2]
        tabs.append(t)
    return tabs


def _kcenter_adaptive(src: np.ndarray, k_base: int, h: float, eps: float, base_order: int):
    """Farthest-point clustering grown until an admissible order exists.

    Returns (center_indices, assignment, radii) or None when the center set
    would have to approach the source count (exact evaluation wins there).
    """
    n = src.shape[0]
    max_k = max(1, n // 3)
    centers = [0]
    d2 = ((src - src[0]) ** 2).sum(axis=1)
    assign = np.zeros(n, dtype=np.int64)
    while True:
        rho = math.sqrt(float(d2.max())) / h
        if len(centers) >= min(k_base, n) and _required_order(rho, eps, base_order) is not None:
            break
        if len(centers) >= max_k:
            return None
        j = int(np.argmax(d2))
        nd2 = ((src - src[j]) ** 2).sum(axis=1)
        closer = nd2 < d2
        d2 = np.where(closer, nd2, d2)
        assign[closer] = len(centers)
        centers.append(j)
    k = len(centers)
    radii = np.zeros(k)
    np.maximum.at(radii, assign, np.sqrt(d2))
    return np.asarray(centers, dtype=np.int64), assign, radii


def _exact_eval(src, tgt, z, sigma2):
    m, n = tgt.shape[0], src.shape[0]
    out = np.empty((m, z.shape[1]))
    block = max(1, int(4_000_000 // max(n, 1)))
    inv = -1.0 / (2.0 * sigma2)
    for lo in range(0, m, block):
        hi = min(lo + block, m)
        k = np.exp(cdist(tgt[lo:hi], src, "sqeuclidean") * inv)
        out[lo:hi] = k @ z
    return out


def _fgt_eval(src, tgt, z, sigma2, plan: GaussTransformPlan):
    n, dim = src.shape
    h = math.sqrt(2.0 * sigma2)
    eps_series = 0.5 * plan.target_accuracy
    clustering = _kcenter_adaptive(src, min(plan.center_count, n), h, eps_series, plan.truncation_order)
    if clustering is None:
        return None
    center_idx, assign, radii = clustering
    k = center_idx.shape[0]
    if k > plan.center_count:
        warnings.warn(f"center count grown from {plan.center_count} to {k} to meet the accuracy target")
    centers = src[center_idx]

    orders = np.empty(k, dtype=np.int64)
    for i in range(k):
        p = _required_order(radii[i] / h, eps_series, plan.truncation_order)
        orders[i] = p if p is not None else _ORDER_CAP

    # Neglecting a group beyond (ratio_eff * h + radius) of its center drops at
    # most exp(-ratio_eff^2) per unit weight.
    ratio_eff = max(plan.far_field_ratio, math.sqrt(max(math.log(2.0 / plan.target_accuracy), 1.0)))

    # Moments per cluster: A_alpha = sum_j z_j u_j^alpha / alpha!
    src_order = np.argsort(assign, kind="stable")
    bounds = np.searchsorted(assign[src_order], np.arange(k + 1))
    moments = []
    for i in range(k):
        idx = src_order[bounds[i]:bounds[i + 1]]
        p = int(orders[i])
        alpha, parent, fdim, ford, inv_fact = _graded_indices(dim, p)
        if idx.size == 0:
            moments.append(np.zeros((alpha.shape[0], z.shape[1])))
            continue
        u = (src[idx] - centers[i]) / h
        pow_tabs = _power_tables(u, p)
        v_tab = _product_table(parent, fdim, ford, pow_tabs, idx.size)
        moments.append((v_tab * inv_fact[:, None]) @ z[idx])

    out = np.zeros((tgt.shape[0], z.shape[1]))
    dc2 = cdist(tgt, centers, "sqeuclidean")
    for i in range(k):
        cutoff = ratio_eff * h + radii[i]
        sel = np.flatnonzero(dc2[:, i] <= cutoff * cutoff)
        if sel.size == 0:
            continue
        p = int(orders[i])
        alpha, parent, fdim, ford, _ = _graded_indices(dim, p)
        block = max(1, int(_EVAL_BLOCK // alpha.shape[0]))
        for lo in range(0, sel.size, block):
            rows = sel[lo:lo + block]
            v = (tgt[rows] - centers[i]) / h
            herm = _hermite_tables(v, p)
            b_tab = _product_table(parent, fdim, ford, herm, rows.shape[0])
            pref = np.exp(-(v * v).sum(axis=1))
            out[rows] += pref[:, None] * (b_tab.T @ moments[i])
    return out


def _truncated_eval(src, tgt, z, sigma2, plan: GaussTransformPlan):
    sigma = math.sqrt(sigma2)
    radius_sigmas = plan.truncation_radius
    # Keep the dropped tail below the accuracy target.
    needed = math.sqrt(2.0 * max(math.log(2.0 / plan.target_accuracy), 1.0))
    if needed > radius_sigmas:
        warnings.warn(f"truncation radius raised from {radius_sigmas} to {needed:.2f} sigma "
                      "to meet the accuracy target")
        radius_sigmas = needed
    r = radius_sigmas * sigma
    dim = src.shape[1]
    m = tgt.shape[0]
    out = np.zeros((m, z.shape[1]))

    origin = np.minimum(src.min(axis=0), tgt.min(axis=0)) - r
    span = np.maximum(src.max(axis=0), tgt.max(axis=0)) + r - origin
    counts = np.maximum((span // r).astype(np.int64) + 3, 3)
    s_cells = np.minimum((src - origin) // r, counts - 2).astype(np.int64)
    t_cells = np.minimum((tgt - origin) // r, counts - 2).astype(np.int64)
    s_lin = np.ravel_multi_index(s_cells.T, counts)

    order = np.argsort(s_lin, kind="stable")
    s_lin_sorted = s_lin[order]

    offsets = np.stack(np.meshgrid(*([np.array([-1, 0, 1])] * dim), indexing="ij"), axis=-1).reshape(-1, dim)
    inv2s = 1.0 / (2.0 * sigma2)
    tgt_idx_all = np.arange(m)
    for off in offsets:
        nb = t_cells + off
        valid = ((nb >= 0) & (nb < counts)).all(axis=1)
        if not valid.any():
            continue
        tv = tgt_idx_all[valid]
        nb_lin = np.ravel_multi_index(nb[valid].T, counts)
        left = np.searchsorted(s_lin_sorted, nb_lin, side="left")
        cnt = np.searchsorted(s_lin_sorted, nb_lin, side="right") - left
        nz = cnt > 0
        if not nz.any():
            continue
        tv, left, cnt = tv[nz], left[nz], cnt[nz]
        cum = np.cumsum(cnt)
        # Expand (start, count) ranges into flat pair lists, in bounded batches.
        start = 0
        while start < tv.shape[0]:
            base = int(cum[start - 1]) if start > 0 else 0
            stop = int(np.searchsorted(cum, base + _PAIR_BUDGET, side="left")) + 1
            stop = min(max(stop, start + 1), tv.shape[0])
            bt, bl, bc = tv[start:stop], left[start:stop], cnt[start:stop]
            first = np.cumsum(bc) - bc
            pos = np.arange(int(bc.sum())) - np.repeat(first, bc) + np.repeat(bl, bc)
            si = order[pos]
            ti = np.repeat(bt, bc)
            d2 = ((tgt[ti] - src[si]) ** 2).sum(axis=1)
            keep = d2 <= r * r
            if keep.any():
                kv = np.exp(-d2[keep] * inv2s)
                ti_k, si_k = ti[keep], si[keep]
                for c in range(z.shape[1]):
                    out[:, c] += np.bincount(ti_k, weights=kv * z[si_k, c], minlength=m)
            start = stop
    return out


def gauss_transform(sources, targets, weights, sigma2: float, plan: GaussTransformPlan) -> np.ndarray:
    """Gaussian kernel sums at the targets: f(t) = sum_j z_j exp(-||t - s_j||^2 / 2 sigma2).

    ``weights`` may be a length-N vector or an N x C matrix (each column
    transformed independently in one pass). Approximate modes satisfy
    ``|f - exact|_inf <= target_accuracy * ||z||_1`` column-wise, falling
    back to exact evaluation (with a warning) when their geometry degenerates.
    """
    src = as_points(sources, "sources")
    tgt = as_points(targets, "targets")
    check_same_dim(src, tgt)
    if not (sigma2 > 0.0 and math.isfinite(sigma2)):
        raise ValueError(f"sigma2 must be finite and > 0, got {sigma2}")
    z = np.ascontiguousarray(weights, dtype=float)
    squeeze = z.ndim == 1
    if squeeze:
        z = z[:, None]
    if z.shape[0] != src.shape[0]:
        raise ValueError(f"weights length {z.shape[0]} does not match source count {src.shape[0]}")

    mode = plan.mode
    if mode == "fgt" and src.shape[1] > 3:
        warnings.warn("series mode supports up to 3 dimensions; using exact evaluation")
        mode = "exact"
    if mode == "fgt" and plan.center_count > src.shape[0]:
        # More centers than sources is a degenerate request; exact is cheaper.
        warnings.warn("center count exceeds source count; using exact evaluation")
        mode = "exact"

    if mode == "exact":
        out = _exact_eval(src, tgt, z, sigma2)
    elif mode == "truncated":
        out = _truncated_eval(src, tgt, z, sigma2, plan)
    else:
        out = _fgt_eval(src, tgt, z, sigma2, plan)
        if out is None:
            warnings.warn("series geometry degenerate at this bandwidth; using exact evaluation")
            out = _exact_eval(src, tgt, z, sigma2)
    return out[:, 0] if squeeze else out


def posterior_products_fast(x, t_y, params: MixtureParams, plan: GaussTransformPlan) -> PosteriorStats:
    """Posterior products via three kernel transforms instead of a dense posterior.

    With kernel column sums k1 = K^T 1 and a = 1 / (k1 + c):
    pt1 = 1 - c a, p1 = K a, px = K (a * x). Agrees with the dense E-step
    within the plan's accuracy envelope.
    """
    stats, _ = _products_with_kernel_sums(x, t_y, params, plan)
    return stats


def _products_with_kernel_sums(x, t_y, params, plan):
    x = as_points(x, "x")
    t_y = as_points(t_y, "t_y")
    d = check_same_dim(x, t_y)
    n, m = x.shape[0], t_y.shape[0]
    c = outlier_constant(params, m, n, d)

    kt1 = gauss_transform(t_y, x, np.ones(m), params.sigma2, plan)
    kt1 = np.maximum(kt1, 0.0)
    den = kt1 + c
    a = np.divide(1.0, den, out=np.zeros_like(den), where=den > 0.0)
    pt1 = 1.0 - c * a

    stacked = np.concatenate([a[:, None], a[:, None] * x], axis=1)
    prods = gauss_transform(x, t_y, stacked, params.sigma2, plan)
    p1 = np.maximum(prods[:, 0], 0.0)
    px = prods[:, 1:]
    stats = PosteriorStats(p1=p1, pt1=pt1, px=px, npost=float(pt1.sum()))
    return stats, kt1


# --------------------------------------------------------------------------
# Low-rank kernel approximation.
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class LowRankKernel:
    """Top-K eigenpairs of a symmetric kernel matrix, eigenvalues descending."""

    q: np.ndarray
    lam: np.ndarray
    k: int

    def __post_init__(self):
        q = np.ascontiguousarray(self.q, dtype=float)
        lam = np.ascontiguousarray(self.lam, dtype=float)
        if q.ndim != 2 or lam.ndim != 1 or q.shape[1] != lam.shape[0] or self.k != lam.shape[0]:
            raise ValueError("inconsistent low-rank factor shapes")
        if not (lam > 0.0).all():
            raise ValueError("eigenvalues must all be positive")
        if lam.shape[0] > 1 and np.any(np.diff(lam) > 1e-12 * lam[0]):
            raise ValueError("eigenvalues must be in descending order")
        ortho = q.T @ q - np.eye(lam.shape[0])
        if np.abs(ortho).max() > 1e-9:
            raise ValueError("eigenvector columns are not orthonormal")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "lam", lam)

    def matvec(self, w: np.ndarray) -> np.ndarray:
        return self.q @ (self.lam[:, None] * (self.q.T @ w)) if w.ndim == 2 else self.q @ (self.lam * (self.q.T @ w))


def topk_eigs(g, k: int, tol: float = 1e-9) -> LowRankKernel:
    """Largest-k eigenpairs of a symmetric matrix.

    Power iteration with Hotelling deflation supplies the subspace, which is
    then refined by blocked Rayleigh-Ritz sweeps against the original matrix
    until every pair satisfies ||G q - lam q|| <= tol * lam_1. Numerically
    nonpositive trailing eigenvalues are dropped with a warning (kernel
    spectra decay below machine precision quickly).
    """
    g = np.ascontiguousarray(g, dtype=float)
    m = g.shape[0]
    if g.ndim != 2 or g.shape[1] != m:
        raise ValueError("matrix must be square")
    if not (1 <= k <= m):
        raise ValueError(f"k must lie in [1, {m}], got {k}")
    gsym = (g + g.T) / 2.0

    rng = np.random.default_rng(1234)  # fixed seed: deterministic output
    work = gsym.copy()
    vecs = np.empty((m, k))
    stage_tol = max(tol, 1e-2)
    cap = 10 * m
    lam_ref = None
    for i in range(k):
        v = rng.standard_normal(m)
        v /= np.linalg.norm(v)
        for _ in range(cap):
            gv = work @ v
            lam = float(v @ gv)
            resid = gv - lam * v
            ref = lam_ref if lam_ref is not None else max(abs(lam), np.finfo(float).tiny)
            if np.linalg.norm(resid) <= stage_tol * ref:
                break
            nv = np.linalg.norm(gv)
            if nv == 0.0:
                break  # v spans a null direction of the deflated matrix
            v = gv / nv
        if lam_ref is None:
            lam_ref = max(abs(lam), np.finfo(float).tiny)
        vecs[:, i] = v
        work -= lam * np.outer(v, v)

    q, _ = np.linalg.qr(vecs)
    converged = 0
    lam1 = lam_ref
    vals = None
    for _ in range(cap):
        gq = gsym @ q
        s = q.T @ gq
        evals, u = np.linalg.eigh(s)
        desc = np.argsort(evals)[::-1]
        evals, u = evals[desc], u[:, desc]
        q_ritz = q @ u
        gq_ritz = gq @ u
        resid = np.linalg.norm(gq_ritz - q_ritz * evals[None, :], axis=0)
        lam1 = max(abs(evals[0]), np.finfo(float).tiny)
        converged = int((resid <= tol * lam1).sum())
        if converged == k:
            q, vals = q_ritz, evals
            break
        q, _ = np.linalg.qr(gq_ritz)
    if vals is None:
        raise EigenConvergenceError(
            f"eigensolver converged {converged} of {k} pairs within the iteration cap",
            converged=converged,
        )

    keep = vals > 1e-14 * lam1
    if not keep.all():
        warnings.warn(f"spectrum numerically rank-deficient: returning {int(keep.sum())} of {k} pairs")
        q, vals = q[:, keep], vals[keep]
    return LowRankKernel(q=q, lam=vals, k=int(vals.shape[0]))


def woodbury_solve(lr: LowRankKernel, p1, lam_sigma2: float, rhs) -> np.ndarray:
    """Solve (d(p1) Q L Q^T + lam_sigma2 I) W = rhs through a K x K inversion.

    This is the diagonally rescaled form of the regularized kernel system: it
    stays finite when entries of p1 vanish (those rows then carry no kernel
    coupling). ``rhs`` must already be expressed in the rescaled form.
    """
    if not (lam_sigma2 > 0.0 and math.isfinite(lam_sigma2)):
        raise ValueError(f"lam_sigma2 must be finite and > 0, got {lam_sigma2}")
    p1 = np.ascontiguousarray(p1, dtype=float)
    if (p1 < 0.0).any():
        raise ValueError("p1 entries must be nonnegative")
    rhs = np.ascontiguousarray(rhs, dtype=float)
    if rhs.ndim == 1:
        rhs = rhs[:, None]
    q, lam = lr.q, lr.lam
    inner = np.diag(1.0 / lam) + (q.T * p1) @ q / lam_sigma2
    try:
        core = np.linalg.solve(inner, q.T @ rhs)
    except np.linalg.LinAlgError as exc:
        cond = np.linalg.cond(inner)
        raise np.linalg.LinAlgError(
            f"inner {lam.shape[0]}x{lam.shape[0]} system is singular (cond ~ {cond:.3e})"
        ) from exc
    w = (rhs - (p1[:, None] * (q @ core)) / lam_sigma2) / lam_sigma2
    return w


def plan_from_config(config) -> GaussTransformPlan:
    """Build a transform plan from a RegistrationConfig."""
    return GaussTransformPlan(
        mode="fgt",
        target_accuracy=config.fgt_eps,
        far_field_ratio=config.fgt_ratio,
        center_count=config.fgt_centers,
        truncation_order=config.fgt_order,
        truncation_radius=config.trunc_radius,
    )
