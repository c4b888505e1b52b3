"""Gaussian-process prior on an in-service unit's FPC scores.

Units are compared through their other streams: each covariate stream is
reduced to FPC scores on the observed window, and the distance between two
units in that stream is the Euclidean distance between score vectors.  For
every target component ``k`` an independent GP with a squared-exponential
kernel over these distances is fitted to the historical scores by maximum
marginal likelihood, and its predictive law at the in-service unit is the
score prior.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Hashable, Mapping, Sequence

import numpy as np
from scipy.linalg import cho_solve, cholesky
from scipy.optimize import minimize

from . import fpca as fpca_mod
from .fpca import PVE, FpcaModel
from .signal import Signal, UnitRecord, WorkingGrid, restrict
from .smoothers import AUTO

LOG_2PI = np.log(2 * np.pi)
JITTER_LADDER = (0.0, 1e-10, 1e-8, 1e-6)


@dataclass(frozen=True)
class SemiMetricBasis:
    """Per covariate stream: the restricted-window FPCA and every unit's scores.

    ``scores[l]`` is an ``(n_units, K(l))`` array whose rows follow ``unit_ids``.
    """

    streams: tuple
    unit_ids: tuple
    models: Mapping[Hashable, FpcaModel]
    scores: Mapping[Hashable, np.ndarray]
    _row: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_row", {u: i for i, u in enumerate(self.unit_ids)})

    def rows(self, units) -> np.ndarray:
        try:
            return np.array([self._row[u] for u in units], dtype=int)
        except KeyError as exc:
            raise KeyError(f"stream absent for unit {exc.args[0]!r}") from None

    def sq_distances(self, units_a, units_b) -> np.ndarray:
        """Squared semi-metric per stream, shape ``(L, len(a), len(b))``."""
        ra, rb = self.rows(units_a), self.rows(units_b)
        out = np.empty((len(self.streams), ra.size, rb.size))
        for n, l in enumerate(self.streams):
            A, B = self.scores[l][ra], self.scores[l][rb]
            diff = A[:, None, :] - B[None, :, :]
            out[n] = np.einsum("ijk,ijk->ij", diff, diff)
        return out


@dataclass(frozen=True)
class KernelHyper:
    alpha: float
    beta: tuple
    sigma: float

    def __post_init__(self):
        object.__setattr__(self, "beta", tuple(float(b) for b in np.atleast_1d(self.beta)))
        if not (self.alpha > 0 and self.sigma > 0 and all(b > 0 for b in self.beta)):
            raise ValueError("kernel hyperparameters must be strictly positive")

    def to_log(self) -> np.ndarray:
        return np.log(np.array([self.alpha, *self.beta, self.sigma]))

    @classmethod
    def from_log(cls, theta) -> "KernelHyper":
        p = np.exp(np.asarray(theta, dtype=float))
        return cls(float(p[0]), tuple(p[1:-1]), float(p[-1]))

    def as_dict(self, streams) -> dict:
        return {
            "alpha": self.alpha,
            "beta": {str(l): b for l, b in zip(streams, self.beta)},
            "sigma": self.sigma,
        }


@dataclass(frozen=True)
class ScoreGpModel:
    k: int
    hyper: KernelHyper
    C: np.ndarray = field(repr=False)
    chol: np.ndarray = field(repr=False)
    train_units: tuple = field(repr=False)
    train_scores: np.ndarray = field(repr=False)
    log_marginal: float = 0.0

    @property
    def weights(self) -> np.ndarray:
        """``(C + sigma^2 I)^{-1} xi``."""
        return cho_solve((self.chol, True), self.train_scores)


@dataclass(frozen=True)
class ScorePrior:
    mean: np.ndarray
    variance: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float).reshape(-1))
        object.__setattr__(self, "variance", np.asarray(self.variance, dtype=float).reshape(-1))
        if self.mean.shape != self.variance.shape:
            raise ValueError("prior mean and variance lengths differ")

    @property
    def covariance(self) -> np.ndarray:
        return np.diag(self.variance)


def semi_metric(basis: SemiMetricBasis, i, j, l) -> float:
    if l not in basis.scores:
        raise KeyError(f"stream absent for unit: {l!r}")
    ri, rj = basis.rows([i, j])
    return float(np.linalg.norm(basis.scores[l][ri] - basis.scores[l][rj]))


def kernel_from_sq_distances(sqd: np.ndarray, hyper: KernelHyper) -> np.ndarray:
    beta = np.asarray(hyper.beta)
    if sqd.shape[0] != beta.size:
        raise ValueError(f"{sqd.shape[0]} distance streams but {beta.size} length-scales")
    expo = np.tensordot(1.0 / beta**2, sqd, axes=1)
    return hyper.alpha * np.exp(-0.5 * expo)


def kernel_h(basis: SemiMetricBasis, hyper: KernelHyper, i, j) -> float:
    return float(kernel_from_sq_distances(basis.sq_distances([i], [j]), hyper)[0, 0])


def _cholesky_jittered(K: np.ndarray) -> np.ndarray:
    base = float(np.mean(np.diag(K)))
    for eps in JITTER_LADDER:
        try:
            return cholesky(K + eps * base * np.eye(K.shape[0]), lower=True)
        except np.linalg.LinAlgError:
            continue
    raise np.linalg.LinAlgError("ill-conditioned kernel")


def lml_from_sq_distances(sqd: np.ndarray, hyper: KernelHyper, y: np.ndarray):
    """Gaussian log marginal likelihood and its gradient in log-hyperparameters.

    Gradient order is ``(log alpha, log beta_1 .. log beta_L, log sigma)``.
    """
    y = np.asarray(y, dtype=float)
    n = y.size
    C = kernel_from_sq_distances(sqd, hyper)
    K = C + hyper.sigma**2 * np.eye(n)
    L = _cholesky_jittered(K)
    a = cho_solve((L, True), y)
    value = -0.5 * y @ a - np.log(np.diag(L)).sum() - 0.5 * n * LOG_2PI
    W = np.outer(a, a) - cho_solve((L, True), np.eye(n))
    beta = np.asarray(hyper.beta)
    grad = np.empty(beta.size + 2)
    grad[0] = 0.5 * np.sum(W * C)
    for m in range(beta.size):
        grad[1 + m] = 0.5 * np.sum(W * C * sqd[m]) / beta[m] ** 2
    grad[-1] = hyper.sigma**2 * np.trace(W)
    return float(value), grad


def log_marginal_likelihood(basis: SemiMetricBasis, hyper: KernelHyper, train_scores, units=None):
    """Value and log-space gradient for scores of ``units`` (default: every unit in ``basis`` but the last)."""
    units = tuple(basis.unit_ids[:-1]) if units is None else tuple(units)
    if len(units) < 1:
        raise ValueError("need at least one training unit")
    return lml_from_sq_distances(basis.sq_distances(units, units), hyper, train_scores)


def _start_point(sqd: np.ndarray, y: np.ndarray) -> np.ndarray:
    var = float(np.var(y))
    var = var if var > 0 else 1.0
    iu = np.triu_indices(sqd.shape[1], 1)
    betas = []
    for m in range(sqd.shape[0]):
        d = np.sqrt(sqd[m][iu])
        d = d[d > 0]
        betas.append(float(np.median(d)) if d.size else 1.0)
    return np.log(np.array([var, *betas, 0.1 * np.sqrt(var)]))


def _bounds(x0: np.ndarray):
    # alpha and sigma may shrink far below the score variance; length-scales stay
    # within a few decades of the typical pairwise distance
    lo = x0 + np.r_[np.log(1e-6), np.full(x0.size - 2, np.log(1e-2)), np.log(1e-4)]
    hi = x0 + np.r_[np.log(1e2), np.full(x0.size - 2, np.log(1e3)), np.log(1e2)]
    return list(zip(lo, hi))


def optimize_from_sq_distances(sqd: np.ndarray, y, restarts: int = 5, seed=0):
    """Multi-start L-BFGS-B ascent of the log marginal likelihood.

    Returns ``(KernelHyper, log_marginal)``.
    """
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    y = np.asarray(y, dtype=float)
    x0 = _start_point(sqd, y)
    bounds = _bounds(x0)
    rng = np.random.default_rng(seed)
    starts = [x0] + [x0 + rng.uniform(np.log(0.1), np.log(10.0), x0.size) for _ in range(restarts - 1)]

    def negative(theta):
        v, g = lml_from_sq_distances(sqd, KernelHyper.from_log(theta), y)
        return -v, -g

    best = None
    for start in starts:
        start = np.clip(start, [b[0] for b in bounds], [b[1] for b in bounds])
        try:
            res = minimize(
                negative, start, jac=True, method="L-BFGS-B", bounds=bounds,
                options={"maxiter": 200, "gtol": 1e-6},
            )
        except np.linalg.LinAlgError:
            continue
        if np.isfinite(res.fun) and (best is None or res.fun < best.fun):
            best = res
    if best is None:
        raise np.linalg.LinAlgError("ill-conditioned kernel for every restart")
    return KernelHyper.from_log(best.x), -float(best.fun)


def optimize_hyper(basis: SemiMetricBasis, train_scores, restarts: int = 5, seed=0, units=None) -> KernelHyper:
    units = tuple(basis.unit_ids[:-1]) if units is None else tuple(units)
    return optimize_from_sq_distances(basis.sq_distances(units, units), train_scores, restarts, seed)[0]


def fit_score_gp(basis: SemiMetricBasis, train_scores, k: int = 0, restarts: int = 5, seed=0, units=None,
                 hyper: KernelHyper | None = None) -> ScoreGpModel:
    units = tuple(basis.unit_ids[:-1]) if units is None else tuple(units)
    y = np.asarray(train_scores, dtype=float)
    sqd = basis.sq_distances(units, units)
    if hyper is None:
        hyper, _ = optimize_from_sq_distances(sqd, y, restarts, seed)
    value, _ = lml_from_sq_distances(sqd, hyper, y)
    C = kernel_from_sq_distances(sqd, hyper)
    L = _cholesky_jittered(C + hyper.sigma**2 * np.eye(y.size))
    return ScoreGpModel(k, hyper, C, L, units, y, value)


def condition_on_training(C_cross: np.ndarray, c_self: float, chol: np.ndarray, y: np.ndarray):
    """Predictive mean and variance of one latent score from the cross-kernel vector."""
    mean = float(C_cross @ cho_solve((chol, True), y))
    v = np.linalg.solve(chol, C_cross) if chol.size else C_cross
    var = float(c_self - v @ v)
    if var < -1e-10:
        raise ValueError("posterior variance underflow")
    return mean, max(var, 0.0)


def prior_for_unit(model: ScoreGpModel, basis: SemiMetricBasis, r, score_noise: bool = False) -> tuple[float, float]:
    """Predictive ``(mean, variance)`` of component ``model.k`` for unit ``r``.

    By default the in-service score is the latent GP value, with self-covariance
    ``alpha``.  ``score_noise=True`` treats it like a training score and adds
    ``sigma^2``.
    """
    sqd = basis.sq_distances(model.train_units, [r])
    c = kernel_from_sq_distances(sqd, model.hyper)[:, 0]
    c_self = model.hyper.alpha + (model.hyper.sigma**2 if score_noise else 0.0)
    return condition_on_training(c, c_self, model.chol, model.train_scores)


def _unit_key(uid):
    return (type(uid).__name__, str(uid))


def build_semi_metric_basis(
    records: Sequence[UnitRecord],
    covariate_streams: Sequence,
    t_star: float,
    domain_start: float,
    grid_size: int = 101,
    pve: float = 0.95,
    bandwidth: float | str = AUTO,
) -> SemiMetricBasis:
    """FPCA of every covariate stream restricted to ``[domain_start, t_star]``."""
    if not t_star > domain_start:
        raise ValueError("t_star must exceed the domain start")
    grid = WorkingGrid.over(domain_start, t_star, grid_size)
    unit_ids = tuple(rec.unit_id for rec in records)
    models, scores = {}, {}
    for l in covariate_streams:
        sigs = []
        for rec in records:
            if l not in rec.streams:
                raise KeyError(f"stream absent for unit {rec.unit_id!r}: {l!r}")
            s = restrict(rec[l], t_star)
            if s.is_empty:
                raise ValueError(f"unit {rec.unit_id!r} has no {l!r} observations up to t*={t_star}")
            sigs.append(s)
        model = fpca_mod.fit(sigs, grid, PVE(pve), bandwidth=bandwidth)
        models[l] = model
        scores[l] = np.array([fpca_mod.estimate_scores(model, s)[0] for s in sigs])
    return SemiMetricBasis(tuple(covariate_streams), unit_ids, models, scores)


def component_seeds(seed, K: int) -> list[int]:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(K)]


def build_priors(
    fpca: FpcaModel,
    historical: Sequence[UnitRecord],
    in_service: UnitRecord,
    covariate_streams: Sequence,
    t_star: float,
    restarts: int = 5,
    seed=0,
    pve: float = 0.95,
    grid_size: int = 101,
    threads: int = 1,
    score_noise: bool = True,
    return_models: bool = False,
):
    """Score prior of the in-service unit for every retained target component.

    The in-service score gets the same ``sigma_k^2`` nugget as the historical
    scores unless ``score_noise=False``; without it a covariate stream that
    carries no information about component ``k`` can collapse the prior
    variance to almost nothing and freeze that component against the unit's
    own data.

    ``historical`` must follow the row order of ``fpca.score_table``.  Units are
    put in a canonical order internally, so the result does not depend on the
    order they are supplied in.
    """
    if len(historical) != fpca.score_table.shape[0]:
        raise ValueError("historical records must align with the FPCA score table")
    order = sorted(range(len(historical)), key=lambda i: _unit_key(historical[i].unit_id))
    hist = [historical[i] for i in order]
    table = fpca.score_table[order]
    basis = build_semi_metric_basis(
        hist + [in_service], covariate_streams, t_star, fpca.grid.domain.a, grid_size, pve
    )
    train_units = tuple(rec.unit_id for rec in hist)
    seeds = component_seeds(seed, fpca.K)

    def one(k):
        gp = fit_score_gp(basis, table[:, k], k, restarts, seeds[k], train_units)
        return gp, prior_for_unit(gp, basis, in_service.unit_id, score_noise)

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            results = list(ex.map(one, range(fpca.K)))
    else:
        results = [one(k) for k in range(fpca.K)]
    prior = ScorePrior([r[1][0] for r in results], [r[1][1] for r in results])
    if return_models:
        return prior, [r[0] for r in results], basis
    return prior
