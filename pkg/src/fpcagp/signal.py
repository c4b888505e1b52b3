"""Irregularly sampled functional data: signals, working grids, quadrature."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Mapping

import numpy as np


def _frozen(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TimeDomain:
    """Closed time interval ``[a, b]``."""

    a: float
    b: float

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError(f"time domain requires a < b, got [{self.a}, {self.b}]")

    @property
    def length(self) -> float:
        return self.b - self.a


@dataclass(frozen=True)
class WorkingGrid:
    """``Q`` equispaced points spanning a time domain."""

    domain: TimeDomain
    size: int = 101
    points: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.size < 2:
            raise ValueError("working grid needs at least 2 points")
        object.__setattr__(
            self, "points", _frozen(np.linspace(self.domain.a, self.domain.b, self.size))
        )

    @classmethod
    def over(cls, a: float, b: float, size: int = 101) -> "WorkingGrid":
        return cls(TimeDomain(float(a), float(b)), size)

    @property
    def spacing(self) -> float:
        return self.domain.length / (self.size - 1)

    @property
    def weights(self) -> np.ndarray:
        """Trapezoid quadrature weights."""
        w = np.full(self.size, self.spacing)
        w[0] = w[-1] = 0.5 * self.spacing
        return w


@dataclass(frozen=True)
class Signal:
    """One stream of one unit, observed at strictly increasing times."""

    times: np.ndarray
    values: np.ndarray
    unit_id: Hashable = None
    stream_id: Hashable = None

    def __post_init__(self):
        t = _frozen(self.times)
        v = _frozen(self.values)
        if t.shape != v.shape:
            raise ValueError("times and values must have the same length")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("signal times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.times.size

    @property
    def is_empty(self) -> bool:
        return self.times.size == 0

    def shifted(self, offset: float) -> "Signal":
        return Signal(self.times, self.values + offset, self.unit_id, self.stream_id)


@dataclass(frozen=True)
class UnitRecord:
    """All streams observed on one unit; stream sampling times may differ."""

    unit_id: Hashable
    streams: Mapping[Hashable, Signal]

    def __post_init__(self):
        for sid, sig in self.streams.items():
            if sig.unit_id != self.unit_id:
                raise ValueError(f"stream {sid!r} belongs to unit {sig.unit_id!r}, not {self.unit_id!r}")

    def __getitem__(self, stream_id) -> Signal:
        return self.streams[stream_id]


def interpolate_to_grid(sig: Signal, grid: WorkingGrid | np.ndarray) -> np.ndarray:
    """Linear interpolation onto ``grid`` with constant extension past the end samples.

    ``grid`` may be a :class:`WorkingGrid` or any array of evaluation times.
    """
    if sig.is_empty:
        raise ValueError("empty signal")
    pts = grid.points if isinstance(grid, WorkingGrid) else np.asarray(grid, dtype=float)
    return np.interp(pts, sig.times, sig.values)


def trapezoid_integral(values, grid: WorkingGrid) -> float:
    values = np.asarray(values, dtype=float)
    if values.shape[0] != grid.size:
        raise ValueError(f"expected {grid.size} values, got {values.shape[0]}")
    return float(grid.weights @ values)


def restrict(sig: Signal, t_star: float) -> Signal:
    """Samples of ``sig`` observed at or before ``t_star``."""
    keep = sig.times <= t_star
    return Signal(sig.times[keep], sig.values[keep], sig.unit_id, sig.stream_id)


def eval_on_grid(grid_values: np.ndarray, grid: WorkingGrid, times) -> np.ndarray:
    """Evaluate grid-represented functions (columns) at arbitrary times by linear interpolation."""
    times = np.asarray(times, dtype=float)
    grid_values = np.asarray(grid_values, dtype=float)
    if grid_values.ndim == 1:
        return np.interp(times, grid.points, grid_values)
    return np.column_stack(
        [np.interp(times, grid.points, grid_values[:, k]) for k in range(grid_values.shape[1])]
    ).reshape(times.size, grid_values.shape[1])
