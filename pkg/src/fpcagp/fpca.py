"""Truncated Karhunen-Loeve model of one stream fitted from historical signals."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .signal import Signal, TimeDomain, WorkingGrid, eval_on_grid, interpolate_to_grid
from .smoothers import (
    AUTO,
    EigenSystem,
    SmoothedMean,
    covariance_surface,
    eigendecompose,
    local_linear_mean,
)

FORMAT_VERSION = 1

QUADRATURE = "quadrature"
BLUP = "blup"


@dataclass(frozen=True)
class PVE:
    """Smallest K whose cumulative proportion of variance explained reaches ``threshold``."""

    threshold: float = 0.99

    def choose(self, eigenvalues: np.ndarray) -> int:
        frac = np.cumsum(eigenvalues) / eigenvalues.sum()
        return int(np.searchsorted(frac, self.threshold - 1e-12) + 1)


@dataclass(frozen=True)
class FixedK:
    K: int

    def choose(self, eigenvalues: np.ndarray) -> int:
        if self.K < 1:
            raise ValueError("K must be positive")
        if self.K > eigenvalues.size:
            raise ValueError(f"requested K={self.K} but only {eigenvalues.size} eigenvalues retained")
        return self.K


def parse_k_rule(text: str):
    """``"pve:0.99"`` or ``"fixed:3"``."""
    kind, _, arg = text.partition(":")
    kind = kind.strip().lower()
    if kind == "pve":
        return PVE(float(arg) if arg else 0.99)
    if kind == "fixed":
        return FixedK(int(arg))
    raise ValueError(f"unknown k rule {text!r}")


@dataclass(frozen=True)
class FpcaModel:
    grid: WorkingGrid
    mean: SmoothedMean
    eigen: EigenSystem
    K: int
    score_table: np.ndarray = field(repr=False)

    @property
    def noise_variance(self) -> float:
        return self.eigen.noise_variance

    @property
    def eigenvalues(self) -> np.ndarray:
        return self.eigen.eigenvalues[: self.K]

    @property
    def eigenfunctions(self) -> np.ndarray:
        return self.eigen.eigenfunctions[:, : self.K]

    @property
    def pve(self) -> float:
        lam = self.eigen.eigenvalues
        return float(lam[: self.K].sum() / lam.sum())

    def pve_curve(self) -> np.ndarray:
        lam = self.eigen.eigenvalues
        return np.cumsum(lam) / lam.sum()

    def mean_at(self, times) -> np.ndarray:
        return eval_on_grid(self.mean.values, self.grid, times)

    def mean_variance_at(self, times) -> np.ndarray:
        return eval_on_grid(self.mean.pointwise_variance, self.grid, times)

    def basis_at(self, times) -> np.ndarray:
        """Retained eigenfunctions at ``times`` as a ``(len(times), K)`` matrix."""
        return eval_on_grid(self.eigenfunctions, self.grid, times)


def fit(
    signals: Sequence[Signal],
    grid: WorkingGrid,
    k_rule=PVE(0.99),
    bandwidth: float | str = AUTO,
    cov_bandwidth: float | str | None = AUTO,
) -> FpcaModel:
    """Fit mean, covariance, eigensystem and training scores of one stream."""
    if len(signals) < 3:
        raise ValueError("FPCA needs at least 3 signals")
    mean = local_linear_mean(signals, grid, bandwidth)
    cov = covariance_surface(signals, mean, grid, cov_bandwidth)
    eig = eigendecompose(cov.matrix, grid, cov.noise_variance)
    # eigenvalues at round-off level relative to the data carry no variation
    scale = float(np.mean(np.concatenate([sg.values for sg in signals]) ** 2)) * grid.domain.length
    if eig.n_components == 0 or eig.eigenvalues[0] <= 1e-12 * scale:
        raise ValueError("degenerate covariance")
    K = k_rule.choose(eig.eigenvalues)
    model = FpcaModel(grid, mean, eig, K, np.empty((0, K)))
    table = np.array([estimate_scores(model, s)[0] for s in signals]).reshape(len(signals), K)
    return FpcaModel(grid, mean, eig, K, table)


def _is_dense(model: FpcaModel, sig: Signal) -> bool:
    min_count = max(10, model.grid.size / 5)
    span = sig.times[-1] - sig.times[0]
    return len(sig) >= min_count and span >= 0.8 * model.grid.domain.length


def estimate_scores(model: FpcaModel, sig: Signal, method: str | None = None):
    """FPC scores of one signal.

    Dense signals use quadrature of the centred, grid-interpolated signal
    against each eigenfunction. Sparse or short signals use the conditional
    expectation (BLUP) under the fitted Gaussian model. ``method`` forces a
    path.

    Returns
    -------
    scores : ndarray, shape (K,)
    method : str
        ``"quadrature"`` or ``"blup"``.
    """
    if sig.is_empty:
        raise ValueError("empty signal")
    if method is None:
        method = QUADRATURE if _is_dense(model, sig) else BLUP
    if method == QUADRATURE:
        centred = interpolate_to_grid(sig, model.grid) - model.mean.values
        scores = (model.grid.weights * centred) @ model.eigenfunctions
        return scores, QUADRATURE
    if method != BLUP:
        raise ValueError(f"unknown score method {method!r}")
    lam = model.eigenvalues
    Phi = model.basis_at(sig.times)
    y = sig.values - model.mean_at(sig.times)
    # Lambda Phi' (Phi Lambda Phi' + s2 I)^-1 y, solved in the K-dimensional form
    A = Phi.T @ Phi + model.noise_variance * np.diag(1.0 / lam)
    scores = np.linalg.solve(A, Phi.T @ y)
    return scores, BLUP


def reconstruct(model: FpcaModel, scores, eval_times, score_cov=None):
    """Mean and variance curves implied by a score vector.

    ``score_cov`` may be a K-vector of score variances or a K x K covariance.
    Without it the variance curve holds only the mean-estimate and noise
    variances.
    """
    eval_times = np.asarray(eval_times, dtype=float)
    Phi = model.basis_at(eval_times)
    mean_curve = model.mean_at(eval_times) + Phi @ np.asarray(scores, dtype=float)
    var_curve = model.mean_variance_at(eval_times) + model.noise_variance
    if score_cov is not None:
        score_cov = np.asarray(score_cov, dtype=float)
        if score_cov.ndim == 1:
            var_curve = var_curve + (Phi * Phi) @ score_cov
        else:
            var_curve = var_curve + np.einsum("ij,jk,ik->i", Phi, score_cov, Phi)
    return mean_curve, var_curve


def save_model(model: FpcaModel, path, hyper: dict | None = None) -> None:
    """Write an ``.npz`` bundle; see README for the layout."""
    arrays = dict(
        format_version=np.array(FORMAT_VERSION),
        domain=np.array([model.grid.domain.a, model.grid.domain.b]),
        grid_size=np.array(model.grid.size),
        mean=model.mean.values,
        mean_variance=model.mean.pointwise_variance,
        bandwidth=np.array(model.mean.bandwidth),
        eigenvalues=model.eigen.eigenvalues,
        eigenfunctions=model.eigen.eigenfunctions,
        noise_variance=np.array(model.eigen.noise_variance),
        K=np.array(model.K),
        score_table=model.score_table,
    )
    if hyper:
        arrays["hyper_json"] = np.array(json.dumps(hyper, sort_keys=True))
    with open(Path(path), "wb") as fh:
        np.savez(fh, **arrays)


def load_model(path):
    """Read a bundle written by :func:`save_model`; returns ``(model, hyper)``."""
    with np.load(Path(path), allow_pickle=False) as z:
        version = int(z["format_version"])
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported model format version {version}")
        a, b = z["domain"]
        grid = WorkingGrid(TimeDomain(float(a), float(b)), int(z["grid_size"]))
        mean = SmoothedMean(z["mean"], z["mean_variance"], float(z["bandwidth"]))
        eig = EigenSystem(z["eigenvalues"], z["eigenfunctions"], float(z["noise_variance"]))
        model = FpcaModel(grid, mean, eig, int(z["K"]), z["score_table"])
        hyper = json.loads(str(z["hyper_json"])) if "hyper_json" in z.files else None
    return model, hyper
