"""Two-environment, two-stream synthetic degradation data.

Stream ``"1"`` is the target (a degradation-like path); stream ``"2"`` is a
covariate whose shape reveals the operating environment early on.  Units in
environment II pick up an extra arctan rise after mid-life that is invisible
in the target stream during the first quarter of the domain.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .signal import Signal, TimeDomain, UnitRecord

TARGET = "1"
COVARIATE = "2"
STREAMS = (TARGET, COVARIATE)

# number of environment-II historical units per heterogeneity level, for 50 units
_ENV2_SHARE = {0: 1.0, 50: 0.5, 90: 0.1}


@dataclass(frozen=True)
class SynthConfig:
    n_units: int = 50
    heterogeneity: int = 90
    domain: TimeDomain = field(default_factory=lambda: TimeDomain(0.0, 10.0))
    points_per_signal: int = 50
    noise_sd: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.heterogeneity not in _ENV2_SHARE:
            raise ValueError("heterogeneity must be one of 0, 50, 90")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be nonnegative")
        if self.n_units < 1 or self.points_per_signal < 1:
            raise ValueError("n_units and points_per_signal must be positive")

    @property
    def n_env2(self) -> int:
        return int(round(_ENV2_SHARE[self.heterogeneity] * self.n_units))

    @property
    def n_env1(self) -> int:
        return self.n_units - self.n_env2


def truth(environment: str, stream: str, w1: float, w2: float, t):
    """Noiseless signal value of one unit."""
    t = np.asarray(t, dtype=float)
    if environment == "I":
        if stream == TARGET:
            return 0.3 * t**2 - 2 * np.sin(w1 * np.pi * t) + w2
        if stream == COVARIATE:
            return 2 * w1 * np.sin(t)
    elif environment == "II":
        if stream == TARGET:
            return (
                0.3 * t**2
                - 2 * np.sin(w1 * np.pi * t**0.85)
                + 3 * (np.arctan(t - 5) + np.pi / 2)
                + w2
            )
        if stream == COVARIATE:
            return 2 * w1 * np.sin(0.3 * t)
    raise ValueError(f"unknown environment/stream {environment!r}/{stream!r}")


@dataclass(frozen=True)
class SynthUnit:
    unit_id: int
    environment: str
    w1: float
    w2: float
    streams: UnitRecord
    noise: dict = field(repr=False, compare=False)

    def truth_at(self, stream: str, t):
        return truth(self.environment, stream, self.w1, self.w2, t)


def truth_at(unit: SynthUnit, stream: str, t):
    return unit.truth_at(stream, t)


def _draw_unit(uid: int, env: str, cfg: SynthConfig, seed_seq) -> SynthUnit:
    rng = np.random.default_rng(seed_seq)
    w1 = float(rng.normal(0.4, 0.03))
    w2 = float(rng.uniform(0.0, 5.0) if env == "I" else rng.uniform(1.5, 6.5))
    t = np.linspace(cfg.domain.a, cfg.domain.b, cfg.points_per_signal)
    streams, noise = {}, {}
    for s in STREAMS:
        eps = rng.normal(0.0, cfg.noise_sd, t.size) if cfg.noise_sd > 0 else np.zeros(t.size)
        noise[s] = eps
        streams[s] = Signal(t, truth(env, s, w1, w2, t) + eps, uid, s)
    return SynthUnit(uid, env, w1, w2, UnitRecord(uid, streams), noise)


def generate(cfg: SynthConfig):
    """Historical units followed by one environment-II test unit.

    Environment-II historical units come first (ids ``0 .. n_env2-1``); the
    test unit has id ``n_units``.  Every unit draws from its own child seed.
    """
    seqs = np.random.SeedSequence(cfg.seed).spawn(cfg.n_units + 1)
    envs = ["II"] * cfg.n_env2 + ["I"] * cfg.n_env1
    historical = [_draw_unit(i, env, cfg, seqs[i]) for i, env in enumerate(envs)]
    test_unit = _draw_unit(cfg.n_units, "II", cfg, seqs[cfg.n_units])
    return historical, test_unit


def export_csv(units: Sequence[SynthUnit], path) -> None:
    """Write ``unit,stream,time,value`` rows."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["unit", "stream", "time", "value"])
        for u in units:
            for sid, sig in u.streams.streams.items():
                for t, v in zip(sig.times, sig.values):
                    w.writerow([u.unit_id, sid, repr(float(t)), repr(float(v))])
