"""Flow-level state: per-route sorted residual document sizes."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence


@dataclass(frozen=True)
class FlowState:
    """Residual sizes per route, each tuple sorted non-decreasing."""

    route_ids: tuple[str, ...]
    residuals: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        if len(self.route_ids) != len(self.residuals):
            raise ValueError("one residual tuple per route required")
        for rid, ys in zip(self.route_ids, self.residuals):
            if any(y <= 0 for y in ys):
                raise ValueError(f"route {rid!r}: residuals must be positive")
            if any(ys[k] > ys[k + 1] for k in range(len(ys) - 1)):
                raise ValueError(f"route {rid!r}: residuals must be sorted")

    @staticmethod
    def empty(route_ids: Sequence[str]) -> "FlowState":
        return FlowState(tuple(route_ids), tuple(() for _ in route_ids))

    @staticmethod
    def from_dict(route_ids: Sequence[str], by_route: Mapping[str, Sequence[float]]) -> "FlowState":
        return FlowState(
            tuple(route_ids),
            tuple(tuple(sorted(by_route.get(rid, ()))) for rid in route_ids),
        )

    @property
    def counts(self) -> tuple[int, ...]:
        return tuple(len(ys) for ys in self.residuals)

    @property
    def total_documents(self) -> int:
        return sum(len(ys) for ys in self.residuals)

    def as_dict(self) -> dict[str, tuple[float, ...]]:
        return dict(zip(self.route_ids, self.residuals))

    def scaled(self, factor: float) -> "FlowState":
        return FlowState(
            self.route_ids,
            tuple(tuple(y * factor for y in ys) for ys in self.residuals),
        )


def flow_distance(a: FlowState, b: FlowState) -> float:
    """Flow-state norm: infinity when route counts differ, otherwise the max
    absolute gap between sorted residuals at matching positions."""
    if a.route_ids != b.route_ids or a.counts != b.counts:
        return math.inf
    worst = 0.0
    for ya, yb in zip(a.residuals, b.residuals):
        for va, vb in zip(ya, yb):
            gap = abs(va - vb)
            if gap > worst:
                worst = gap
    return worst
