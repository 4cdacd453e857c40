"""Empirical distribution estimation and distances shared by all experiments."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import EmptyWindow, TooFewBatches


@dataclass
class EmpiricalPmf:
    """Sparse occupancy weights over states, normalized by total observed
    weight (which includes any mass that fell outside the truncation box,
    so in-box probabilities sum to at most 1)."""

    weights: dict[tuple, float] = field(default_factory=dict)
    total: float = 0.0
    box: tuple | None = None

    def prob(self, state: tuple) -> float:
        if self.total <= 0:
            return 0.0
        return self.weights.get(tuple(state), 0.0) / self.total

    def normalized(self) -> dict[tuple, float]:
        if self.total <= 0:
            return {}
        return {s: w / self.total for s, w in self.weights.items()}

    @property
    def covered_mass(self) -> float:
        return math.fsum(self.weights.values()) / self.total if self.total > 0 else 0.0

    def merge(self, other: "EmpiricalPmf") -> "EmpiricalPmf":
        out = EmpiricalPmf(dict(self.weights), self.total + other.total, self.box)
        for s, w in other.weights.items():
            out.weights[s] = out.weights.get(s, 0.0) + w
        return out


def _in_box(state: tuple, box: tuple | None) -> bool:
    if box is None:
        return True
    return all(v <= b for v, b in zip(state, box))


class DwellAccumulator:
    """Streams (t0, t1, state) dwell segments into an EmpiricalPmf,
    clipping everything before burn_in."""

    def __init__(self, burn_in: float = 0.0, box: tuple | None = None):
        self.burn_in = burn_in
        self.box = tuple(box) if box is not None else None
        self._weights: dict[tuple, float] = {}
        self._total = 0.0

    def add(self, t0: float, t1: float, state: tuple) -> None:
        lo = max(t0, self.burn_in)
        if t1 <= lo:
            return
        w = t1 - lo
        self._total += w
        if _in_box(state, self.box):
            key = tuple(state)
            self._weights[key] = self._weights.get(key, 0.0) + w

    def finish(self) -> EmpiricalPmf:
        if self._total <= 0:
            raise EmptyWindow("no observation time after burn-in")
        return EmpiricalPmf(self._weights, self._total, self.box)


@dataclass
class Trajectory:
    """Piecewise-constant state path: states[k] holds on [times[k], times[k+1})
    and the last state holds until t_end."""

    times: list[float]
    states: list[tuple]
    t_end: float

    def __post_init__(self):
        if len(self.times) != len(self.states):
            raise ValueError("times and states must have equal length")

    def final_state(self) -> tuple:
        return self.states[-1]


def time_average_pmf(
    trajectory: Trajectory, burn_in: float = 0.0, box: tuple | None = None
) -> EmpiricalPmf:
    """Occupancy-time distribution of a piecewise-constant trajectory."""
    acc = DwellAccumulator(burn_in, box)
    times = trajectory.times
    for k, state in enumerate(trajectory.states):
        t1 = times[k + 1] if k + 1 < len(times) else trajectory.t_end
        acc.add(times[k], t1, state)
    return acc.finish()


def tv_distance(p, q) -> float:
    """Total variation 0.5 * sum |p - q| over the union of supports."""
    pd = p.normalized() if isinstance(p, EmpiricalPmf) else dict(p)
    qd = q.normalized() if isinstance(q, EmpiricalPmf) else dict(q)
    keys = set(pd) | set(qd)
    return 0.5 * math.fsum(abs(pd.get(k, 0.0) - qd.get(k, 0.0)) for k in keys)


def cdf_sup_distance(
    f: Callable[[float], float], g: Callable[[float], float], grid: Sequence[float]
) -> float:
    """max over the grid of |F(x) - G(x)|."""
    if len(grid) == 0:
        raise ValueError("grid must be non-empty")
    return max(abs(f(x) - g(x)) for x in grid)


@dataclass(frozen=True)
class ConfidenceInterval:
    estimate: float
    half_width: float
    level: float
    method: str = "batch-means"

    @property
    def lo(self) -> float:
        return self.estimate - self.half_width

    @property
    def hi(self) -> float:
        return self.estimate + self.half_width

    def covers(self, value: float) -> bool:
        return self.lo <= value <= self.hi


def batch_means_ci(
    samples: Sequence[float], batches: int = 30, level: float = 0.95
) -> ConfidenceInterval:
    """Normal-quantile batch-means interval for the mean of a (possibly
    autocorrelated) series."""
    x = np.asarray(samples, dtype=float)
    if batches < 2:
        raise TooFewBatches(f"need at least 2 batches, got {batches}")
    if x.size < batches:
        raise TooFewBatches(f"{x.size} samples cannot fill {batches} batches")
    if not (0.0 < level < 1.0):
        raise ValueError("level must lie in (0, 1)")
    length = x.size // batches
    means = x[: length * batches].reshape(batches, length).mean(axis=1)
    est = float(means.mean())
    se = float(means.std(ddof=1)) / math.sqrt(batches)
    z = NormalDist().inv_cdf(0.5 + level / 2.0)
    return ConfidenceInterval(est, z * se, level)
