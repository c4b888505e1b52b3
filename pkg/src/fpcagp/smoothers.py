"""Local linear estimation of mean and covariance, and the Mercer eigensystem.

All kernel smoothing here works on *binned* observation times: pooled times
are mapped onto a set of bin centres (the distinct times themselves when
there are few enough of them, otherwise equal-width bins), sufficient
statistics are accumulated per bin, and every local fit is then a handful of
matrix products.  With distinct-time bins the result is identical to the
unbinned smoother.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .signal import Signal, WorkingGrid

AUTO = "auto"
NOISE_FLOOR = 1e-10
MAX_BINS = 256

# relative determinant below which a local design is treated as singular
_SINGULAR_TOL = 1e-10


@dataclass(frozen=True)
class SmoothedMean:
    values: np.ndarray
    pointwise_variance: np.ndarray
    bandwidth: float
    fallback: bool = False


@dataclass(frozen=True)
class CovarianceSurface:
    matrix: np.ndarray
    noise_variance: float
    bandwidth: float
    fallback: bool = False
    diagonal_only_units: tuple = ()


@dataclass(frozen=True)
class EigenSystem:
    """Retained eigenpairs of a covariance surface on a working grid.

    ``eigenfunctions`` has one column per eigenvalue and is orthonormal under
    the trapezoid inner product of the grid.
    """

    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray
    noise_variance: float = 0.0

    @property
    def n_components(self) -> int:
        return self.eigenvalues.size


@dataclass
class _Bins:
    centers: np.ndarray
    index: np.ndarray  # bin of each pooled observation


def _make_bins(times: np.ndarray, max_bins: int = MAX_BINS) -> _Bins:
    uniq, inverse = np.unique(times, return_inverse=True)
    if uniq.size <= max_bins:
        return _Bins(uniq, inverse.reshape(-1))
    edges = np.linspace(times.min(), times.max(), max_bins + 1)
    idx = np.clip(np.searchsorted(edges, times, side="right") - 1, 0, max_bins - 1)
    counts = np.bincount(idx, minlength=max_bins)
    sums = np.bincount(idx, weights=times, minlength=max_bins)
    used = counts > 0
    centers = sums[used] / counts[used]
    remap = np.cumsum(used) - 1
    return _Bins(centers, remap[idx])


def _kernel(x: np.ndarray, at: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian weights K[(at_g - x_b)/h] and offsets x_b - at_g, shape (G, B).

    Each row is rescaled by its largest entry so that evaluation points far from
    every bin do not underflow; every estimator below is invariant to a
    per-row scale.
    """
    d = x[None, :] - at[:, None]
    z = -0.5 * (d / h) ** 2
    z -= z.max(axis=1, keepdims=True)
    return np.exp(z), d


def _fit_1d(x, n, sy, syy, at, h):
    """Local linear fit from per-bin counts ``n``, sums ``sy`` and sums of squares ``syy``.

    Returns fitted values, variance of the local estimate, and a mask of the
    evaluation points that fell back to local constant.
    """
    K, d = _kernel(x, at, h)
    s0 = K @ n
    s1 = (K * d) @ n
    s2 = (K * d * d) @ n
    t0 = K @ sy
    t1 = (K * d) @ sy
    det = s0 * s2 - s1 * s1
    singular = ~(det > _SINGULAR_TOL * s0 * s2)
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(singular, t0 / s0, (s2 * t0 - s1 * t1) / det)
        b = np.where(singular, 0.0, (s0 * t1 - s1 * t0) / det)
    rss = None
    if syy is not None:
        rss = K @ syy - 2 * a * t0 - 2 * b * t1 + a * a * s0 + 2 * a * b * s1 + b * b * s2
        rss = np.maximum(rss, 0.0)
        n_eff = s0 * s0 / ((K * K) @ n)
        rss = rss / s0 / n_eff
    return a, rss, singular


def _bandwidth_candidates(grid: WorkingGrid, n: int = 10) -> np.ndarray:
    lo = 0.5 * grid.spacing
    hi = 0.25 * grid.domain.length
    return np.exp(np.linspace(np.log(lo), np.log(hi), n))


def _pool(signals: Sequence[Signal]):
    times = np.concatenate([s.times for s in signals])
    values = np.concatenate([s.values for s in signals])
    owner = np.concatenate([np.full(len(s), i) for i, s in enumerate(signals)])
    return times, values, owner


def _bin_sums(bins: _Bins, values, mask=None):
    B = bins.centers.size
    idx = bins.index if mask is None else bins.index[mask]
    v = values if mask is None else values[mask]
    n = np.bincount(idx, minlength=B).astype(float)
    sy = np.bincount(idx, weights=v, minlength=B)
    syy = np.bincount(idx, weights=v * v, minlength=B)
    return n, sy, syy


def select_mean_bandwidth(signals: Sequence[Signal], grid: WorkingGrid, folds: int = 5) -> float:
    """Leave-units-out cross-validation over a log grid of 10 bandwidths."""
    times, values, owner = _pool(signals)
    bins = _make_bins(times)
    fold_of = owner % min(folds, len(signals))
    best_h, best_err = None, np.inf
    for h in _bandwidth_candidates(grid):
        err = 0.0
        for f in np.unique(fold_of):
            train = fold_of != f
            n, sy, _ = _bin_sums(bins, values, train)
            hn, hsy, hsyy = _bin_sums(bins, values, ~train)
            used = hn > 0
            fit, _, _ = _fit_1d(bins.centers[n > 0], n[n > 0], sy[n > 0], None, bins.centers[used], h)
            err += float(np.sum(hsyy[used] - 2 * fit * hsy[used] + fit * fit * hn[used]))
        if err < best_err:
            best_h, best_err = h, err
    return float(best_h)


def local_linear_mean(
    signals: Sequence[Signal], grid: WorkingGrid, bandwidth: float | str = AUTO
) -> SmoothedMean:
    """Pooled local linear estimate of the mean function on ``grid``.

    Parameters
    ----------
    signals : sequence of Signal
        At least two signals of the same stream.
    grid : WorkingGrid
        Evaluation grid.
    bandwidth : float or "auto"
        Gaussian kernel bandwidth. ``"auto"`` selects it by 5-fold
        leave-units-out cross-validation.

    Returns
    -------
    SmoothedMean
        Fitted values, the variance of the local estimate (kernel-weighted
        residual variance over the effective local sample size) and a flag
        set when any grid point fell back to a local constant fit.
    """
    if len(signals) < 2:
        raise ValueError("mean smoothing needs at least 2 signals")
    times, values, _ = _pool(signals)
    if times.size == 0:
        raise ValueError("pooled sample is empty")
    if bandwidth == AUTO:
        bandwidth = select_mean_bandwidth(signals, grid)
    bandwidth = float(bandwidth)
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    bins = _make_bins(times)
    n, sy, syy = _bin_sums(bins, values)
    fit, var, singular = _fit_1d(bins.centers, n, sy, syy, grid.points, bandwidth)
    fallback = bool(singular.any())
    if fallback:
        warnings.warn("local linear mean fit singular; used local constant fit", RuntimeWarning)
    return SmoothedMean(fit, var, bandwidth, fallback)


def _fit_2d(x, N, P, at, h):
    K, d = _kernel(x, at, h)
    Kd = K * d
    Kdd = Kd * d
    m00 = K @ N @ K.T
    m10 = Kd @ N @ K.T
    m01 = K @ N @ Kd.T
    m20 = Kdd @ N @ K.T
    m11 = Kd @ N @ Kd.T
    m02 = K @ N @ Kdd.T
    t0 = K @ P @ K.T
    t1 = Kd @ P @ K.T
    t2 = K @ P @ Kd.T
    A = np.stack(
        [
            np.stack([m00, m10, m01], -1),
            np.stack([m10, m20, m11], -1),
            np.stack([m01, m11, m02], -1),
        ],
        -2,
    )
    rhs = np.stack([t0, t1, t2], -1)
    scale = np.sqrt(np.einsum("...ii->...i", A))
    with np.errstate(divide="ignore", invalid="ignore"):
        An = A / scale[..., :, None] / scale[..., None, :]
        det = np.linalg.det(np.nan_to_num(An))
    singular = ~(det > _SINGULAR_TOL)
    out = np.empty(m00.shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        out[singular] = t0[singular] / m00[singular]
    ok = ~singular
    if ok.any():
        out[ok] = np.linalg.solve(A[ok], rhs[ok][..., None])[..., 0, 0]
    return out, singular


def _rotated_diagonal(x, N, P, at, h):
    """Surface diagonal from off-diagonal products, quadratic across the diagonal.

    In coordinates u = (s + t) / 2 along and v = (s - t) / 2 across the
    diagonal the local design is ``[1, u - g, v^2]``; the symmetric pairs make
    odd powers of v vanish.  This removes the curvature bias a product linear
    smoother leaves on the ridge, which would otherwise leak into the noise
    variance.
    """
    s, t = np.meshgrid(x, x, indexing="ij")
    keep = N > 0
    n = N[keep]
    p = P[keep]
    u = 0.5 * (s[keep] + t[keep])
    v2 = (0.5 * (s[keep] - t[keep])) ** 2
    du = u[None, :] - at[:, None]
    z = -0.5 * (du**2 + v2[None, :]) / h**2
    z -= z.max(axis=1, keepdims=True)
    w = np.exp(z) * n[None, :]
    cols = [np.ones_like(du), du, np.broadcast_to(v2, du.shape)]
    A = np.empty((at.size, 3, 3))
    rhs = np.empty((at.size, 3))
    for i in range(3):
        rhs[:, i] = np.sum(w * cols[i] * (p / n)[None, :], axis=1)
        for j in range(i, 3):
            A[:, i, j] = A[:, j, i] = np.sum(w * cols[i] * cols[j], axis=1)
    out = rhs[:, 0] / A[:, 0, 0]
    scale = np.sqrt(np.einsum("gii->gi", A))
    det = np.linalg.det(A / scale[:, :, None] / scale[:, None, :])
    ok = det > _SINGULAR_TOL
    if ok.any():
        out[ok] = np.linalg.solve(A[ok], rhs[ok][..., None])[:, 0, 0]
    return out


def _products(signals, resid, owner, bins, select=None):
    """Per-bin-pair counts, sums and sums of squares of within-unit off-diagonal
    residual products, plus diagonal counts and sums, for units in ``select``."""
    B = bins.centers.size
    N = np.zeros(B * B)
    P = np.zeros(B * B)
    P2 = np.zeros(B * B)
    diag_n = np.zeros(B)
    diag_p = np.zeros(B)
    skipped = []
    for i, sig in enumerate(signals):
        if select is not None and not select[i]:
            continue
        sel = owner == i
        b = bins.index[sel]
        r = resid[sel]
        diag_n += np.bincount(b, minlength=B)
        diag_p += np.bincount(b, weights=r * r, minlength=B)
        if len(sig) < 2:
            skipped.append(sig.unit_id if sig.unit_id is not None else i)
            continue
        flat = b[:, None] * B + b[None, :]
        off = ~np.eye(b.size, dtype=bool)
        prod = np.outer(r, r)[off]
        N += np.bincount(flat[off], minlength=B * B)
        P += np.bincount(flat[off], weights=prod, minlength=B * B)
        P2 += np.bincount(flat[off], weights=prod * prod, minlength=B * B)
    return N.reshape(B, B), P.reshape(B, B), P2.reshape(B, B), diag_n, diag_p, skipped


def select_covariance_bandwidth(
    signals: Sequence[Signal], mean: SmoothedMean, grid: WorkingGrid, folds: int = 5
) -> float:
    """Leave-units-out cross-validation of the surface smoother on raw products."""
    times, values, owner = _pool(signals)
    bins = _make_bins(times)
    resid = values - np.interp(times, grid.points, mean.values)
    nfold = min(folds, len(signals))
    fold_of = np.arange(len(signals)) % nfold
    parts = [_products(signals, resid, owner, bins, fold_of == f)[:3] for f in range(nfold)]
    N_all = sum(p[0] for p in parts)
    P_all = sum(p[1] for p in parts)
    best_h, best_err = None, np.inf
    for h in _bandwidth_candidates(grid):
        err = 0.0
        for hN, hP, hP2 in parts:
            N, P = N_all - hN, P_all - hP
            used = N.sum(axis=1) > 0
            if used.sum() < 2:
                continue
            x = bins.centers[used]
            fit, _ = _fit_2d(x, N[np.ix_(used, used)], P[np.ix_(used, used)], x, h)
            fit = np.nan_to_num(fit)
            sub = np.ix_(used, used)
            err += float(np.sum(hP2[sub] - 2 * fit * hP[sub] + fit * fit * hN[sub]))
        if err < best_err:
            best_h, best_err = h, err
    return float(best_h)


def covariance_surface(
    signals: Sequence[Signal],
    mean: SmoothedMean,
    grid: WorkingGrid,
    bandwidth: float | str | None = AUTO,
) -> CovarianceSurface:
    """Smoothed covariance surface and measurement-noise variance.

    Off-diagonal raw products of mean-centred residuals within each unit are
    smoothed with a product Gaussian local linear smoother.  ``None`` reuses
    the mean's bandwidth.  ``"auto"`` takes the smaller of the mean's and a
    leave-units-out cross-validated one: the mean criterion cannot see
    structure that only the covariance has, and the product criterion drifts
    towards oversmoothing when a few large scores dominate the raw products.  The diagonal raw products, inflated by the noise, are
    smoothed separately; the noise variance is the grid average of their
    excess over the surface ridge, floored at ``NOISE_FLOOR``.
    """
    if len(signals) < 2:
        raise ValueError("covariance estimation needs at least 2 signals")
    if bandwidth is None:
        bandwidth = mean.bandwidth
    elif bandwidth == AUTO:
        bandwidth = min(mean.bandwidth, select_covariance_bandwidth(signals, mean, grid))
    h = float(bandwidth)
    if h <= 0:
        raise ValueError("bandwidth must be positive")
    times, values, owner = _pool(signals)
    bins = _make_bins(times)
    resid = values - np.interp(times, grid.points, mean.values)
    N, P, _, diag_n, diag_p, skipped = _products(signals, resid, owner, bins)
    if skipped:
        warnings.warn(
            f"{len(skipped)} unit(s) with fewer than 2 time points contribute only to the diagonal",
            RuntimeWarning,
        )
    used = N.sum(axis=1) > 0
    if used.sum() < 2:
        raise ValueError("not enough within-unit time pairs to smooth a covariance surface")
    x = bins.centers[used]
    S, singular = _fit_2d(x, N[np.ix_(used, used)], P[np.ix_(used, used)], grid.points, h)
    S = 0.5 * (S + S.T)

    dn = diag_n > 0
    diag_fit, _, _ = _fit_1d(bins.centers[dn], diag_n[dn], diag_p[dn], None, grid.points, h)
    ridge = _rotated_diagonal(x, N[np.ix_(used, used)], P[np.ix_(used, used)], grid.points, h)
    noise = max(float(np.mean(diag_fit - ridge)), NOISE_FLOOR)
    return CovarianceSurface(S, noise, h, bool(singular.any()), tuple(skipped))


def eigendecompose(surface: np.ndarray, grid: WorkingGrid, noise_variance: float = 0.0) -> EigenSystem:
    """Eigenpairs of the covariance operator discretised with trapezoid weights.

    Only strictly positive eigenvalues are retained.  Eigenfunctions are
    oriented so their grid integral is nonnegative; when it vanishes the first
    nonzero grid value is made positive.
    """
    S = np.asarray(surface, dtype=float)
    scale = max(1.0, float(np.abs(S).max(initial=0.0)))
    if np.abs(S - S.T).max(initial=0.0) > 1e-9 * scale:
        raise ValueError("asymmetric surface")
    w = grid.weights
    sw = np.sqrt(w)
    lam, vec = np.linalg.eigh(sw[:, None] * S * sw[None, :])
    order = np.argsort(lam)[::-1]
    lam, vec = lam[order], vec[:, order]
    tol = grid.size * np.finfo(float).eps * max(float(np.abs(lam).max(initial=0.0)), 0.0)
    keep = lam > max(tol, 0.0)
    lam = lam[keep]
    phi = vec[:, keep] / sw[:, None]
    for k in range(phi.shape[1]):
        integral = w @ phi[:, k]
        if abs(integral) <= 1e-12:
            nz = np.flatnonzero(np.abs(phi[:, k]) > 1e-12)
            flip = nz.size > 0 and phi[nz[0], k] < 0
        else:
            flip = integral < 0
        if flip:
            phi[:, k] = -phi[:, k]
    return EigenSystem(lam, phi, float(noise_variance))
