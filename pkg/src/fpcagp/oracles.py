"""Brute-force reference computations used to check the fast paths.

Nothing here imports the modules it is meant to check; only dense textbook
linear algebra on small inputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable

import numpy as np


@dataclass(frozen=True)
class OracleCase:
    description: str
    inputs: Any
    expected: Any
    tolerance: float
    oracle: str


def gaussian_condition_oracle(mean, cov, observed, values, use_inverse: bool = False):
    """Conditional law of the unobserved coordinates of a joint Gaussian.

    ``use_inverse`` switches from linear solves to an explicit inverse so the
    two paths can be checked against each other.
    """
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    obs = np.asarray(observed, dtype=int)
    hid = np.setdiff1d(np.arange(mean.size), obs)
    S_oo = cov[np.ix_(obs, obs)]
    S_ho = cov[np.ix_(hid, obs)]
    S_hh = cov[np.ix_(hid, hid)]
    if obs.size and np.linalg.matrix_rank(S_oo) < obs.size:
        raise np.linalg.LinAlgError("singular observed block")
    resid = np.asarray(values, dtype=float) - mean[obs]
    if use_inverse:
        inv = np.linalg.inv(S_oo) if obs.size else np.zeros((0, 0))
        return mean[hid] + S_ho @ inv @ resid, S_hh - S_ho @ inv @ S_ho.T
    if not obs.size:
        return mean[hid].copy(), S_hh.copy()
    gain = np.linalg.solve(S_oo, S_ho.T).T
    return mean[hid] + gain @ resid, S_hh - gain @ S_ho.T


def finite_difference_gradient(f: Callable, x, step: float = 1e-5) -> np.ndarray:
    """Central differences of a scalar function, one coordinate at a time."""
    if step <= 0:
        raise ValueError("step must be positive")
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        g[i] = (f(x + e) - f(x - e)) / (2 * step)
    return g
