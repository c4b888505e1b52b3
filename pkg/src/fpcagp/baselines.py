"""Comparison methods: single-stream FPCA (FPCA-B) and a polynomial mixed-effects model (ME)."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .fpca import FpcaModel
from .score_gp import ScorePrior
from .signal import Signal
from .smoothers import NOISE_FLOOR


def fpca_b_prior(fpca: FpcaModel) -> ScorePrior:
    """Population law of the scores: zero mean, variance equal to the eigenvalues."""
    return ScorePrior(np.zeros(fpca.K), fpca.eigenvalues.copy())


@dataclass(frozen=True)
class MeModel:
    """Polynomial random-coefficient model in the standardised time ``(t - center) / scale``."""

    degree: int
    fixed_effects: np.ndarray
    random_effect_cov: np.ndarray
    noise_variance: float
    center: float = 0.0
    scale: float = 1.0
    aic: tuple = ()

    def design(self, times) -> np.ndarray:
        x = (np.asarray(times, dtype=float) - self.center) / self.scale
        return np.vander(x, self.degree + 1, increasing=True)

    def mean_curve(self, times) -> np.ndarray:
        return self.design(times) @ self.fixed_effects


def _floor_rss(rss: float, n: int, ref: float) -> float:
    return max(rss / n, 1e-12 * ref + np.finfo(float).tiny)


def me_fit(signals: Sequence[Signal], max_degree: int = 5) -> MeModel:
    """Two-stage fit: per-unit least squares, then moments of the coefficients.

    The degree minimises AIC of the pooled population polynomial fit,
    ``n log(RSS / n) + 2 (d + 1)``.
    """
    if len(signals) < 3:
        raise ValueError("ME needs at least 3 signals")
    times = np.concatenate([s.times for s in signals])
    values = np.concatenate([s.values for s in signals])
    center = 0.5 * (times.min() + times.max())
    scale = max(0.5 * (times.max() - times.min()), 1e-12)
    n = values.size
    ref = float(np.mean(values**2))

    best = None
    aics = []
    for d in range(max_degree + 1):
        X = np.vander((times - center) / scale, d + 1, increasing=True)
        coef, *_ = np.linalg.lstsq(X, values, rcond=None)
        rss = float(np.sum((values - X @ coef) ** 2))
        fits, unit_rss, unit_n = [], 0.0, 0
        for s in signals:
            if len(s) < d + 1 or np.unique(s.times).size < d + 1:
                continue
            Xi = np.vander((s.times - center) / scale, d + 1, increasing=True)
            bi, *_ = np.linalg.lstsq(Xi, s.values, rcond=None)
            fits.append(bi)
            unit_rss += float(np.sum((s.values - Xi @ bi) ** 2))
            unit_n += len(s)
        if not fits:
            aics.append(np.inf)
            continue
        aic = n * np.log(_floor_rss(rss, n, ref)) + 2 * (d + 1)
        aics.append(aic)
        if best is None or aic < best[0]:
            best = (aic, d, np.array(fits), unit_rss, unit_n)
    if best is None:
        raise ValueError("no feasible polynomial degree")
    _, d, coefs, unit_rss, unit_n = best
    fixed = coefs.mean(axis=0)
    if coefs.shape[0] > 1:
        cov = np.atleast_2d(np.cov(coefs, rowvar=False))
    else:
        cov = np.zeros((d + 1, d + 1))
    w, V = np.linalg.eigh(0.5 * (cov + cov.T))
    cov = (V * np.clip(w, 0.0, None)) @ V.T
    dof = unit_n - coefs.shape[0] * (d + 1)
    noise = unit_rss / dof if dof > 0 else unit_rss / max(unit_n, 1)
    return MeModel(d, fixed, cov, max(float(noise), NOISE_FLOOR), float(center), float(scale), tuple(aics))


def me_posterior(model: MeModel, obs: Signal):
    """Posterior mean and covariance of the unit's polynomial coefficients."""
    p = model.degree + 1
    Om = model.random_effect_cov
    tr = float(np.trace(Om))
    if np.linalg.eigvalsh(Om).min() <= 1e-12 * tr:
        warnings.warn("singular random-effect covariance regularised", RuntimeWarning)
        Om = Om + 1e-8 * max(tr, NOISE_FLOOR) / p * np.eye(p)
    Om_f = cho_factor(Om, lower=True)
    if obs.is_empty:
        return model.fixed_effects.copy(), Om.copy()
    s2 = model.noise_variance
    X = model.design(obs.times)
    prec = X.T @ X / s2 + cho_solve(Om_f, np.eye(p))
    prec_f = cho_factor(0.5 * (prec + prec.T), lower=True)
    mean = cho_solve(prec_f, cho_solve(Om_f, model.fixed_effects) + X.T @ obs.values / s2)
    cov = cho_solve(prec_f, np.eye(p))
    return mean, 0.5 * (cov + cov.T)


def me_predict(model: MeModel, obs: Signal, eval_times):
    """Predictive mean and variance curves of one unit given its observations."""
    mean, cov = me_posterior(model, obs)
    X = model.design(eval_times)
    return X @ mean, np.einsum("ij,jk,ik->i", X, cov, X) + model.noise_variance
