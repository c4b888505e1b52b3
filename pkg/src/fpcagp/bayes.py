"""Conjugate update of FPC scores from the in-service unit's own observations."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .fpca import FpcaModel
from .score_gp import ScorePrior
from .signal import Signal


@dataclass(frozen=True)
class PosteriorScores:
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float).reshape(-1))
        cov = np.asarray(self.covariance, dtype=float)
        object.__setattr__(self, "covariance", cov.reshape(self.mean.size, self.mean.size))

    @classmethod
    def from_prior(cls, prior: ScorePrior) -> "PosteriorScores":
        return cls(prior.mean.copy(), np.diag(prior.variance))


def _as_gaussian(prior):
    if isinstance(prior, ScorePrior):
        if np.any(prior.variance <= 0):
            raise ValueError("degenerate prior")
        return prior.mean, np.diag(prior.variance)
    return prior.mean, prior.covariance


def update_scores(fpca: FpcaModel, prior, obs: Signal) -> PosteriorScores:
    """Gaussian posterior of the score vector given observations of the target stream.

    ``prior`` is a :class:`ScorePrior` (independent components) or an earlier
    :class:`PosteriorScores`, which makes repeated calls a streaming update.
    """
    mu0, S0 = _as_gaussian(prior)
    if obs.is_empty:
        return PosteriorScores(mu0.copy(), S0.copy())
    s2 = fpca.noise_variance
    Phi = fpca.basis_at(obs.times)
    resid = obs.values - fpca.mean_at(obs.times)
    S0_f = cho_factor(S0, lower=True)
    prec = Phi.T @ Phi / s2 + cho_solve(S0_f, np.eye(mu0.size))
    prec = 0.5 * (prec + prec.T)
    prec_f = cho_factor(prec, lower=True)
    rhs = cho_solve(S0_f, mu0) + Phi.T @ resid / s2
    mean = cho_solve(prec_f, rhs)
    cov = cho_solve(prec_f, np.eye(mu0.size))
    return PosteriorScores(mean, 0.5 * (cov + cov.T))


def sequential_update(fpca: FpcaModel, prior, obs_batches: Sequence[Signal]) -> PosteriorScores:
    """Fold :func:`update_scores` over batches, each posterior becoming the next prior."""
    post = prior
    for batch in obs_batches:
        post = update_scores(fpca, post, batch)
    if isinstance(post, ScorePrior):
        post = PosteriorScores.from_prior(post)
    return post


def predict(fpca: FpcaModel, post: PosteriorScores, eval_times):
    """Posterior predictive mean and variance curves at ``eval_times``."""
    eval_times = np.asarray(eval_times, dtype=float)
    Phi = fpca.basis_at(eval_times)
    mean = fpca.mean_at(eval_times) + Phi @ post.mean
    var = (
        fpca.mean_variance_at(eval_times)
        + np.einsum("ij,jk,ik->i", Phi, post.covariance, Phi)
        + fpca.noise_variance
    )
    return mean, var


def extrapolate(fpca: FpcaModel, prior: ScorePrior, obs: Signal, eval_times):
    """Update ``prior`` with ``obs`` and predict; shared by every FPCA-based method."""
    return predict(fpca, update_scores(fpca, prior, obs), eval_times)
