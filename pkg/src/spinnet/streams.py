"""Arrival and size randomness sources for the simulators.

Both simulators consume arrivals through the same small interface:

- ``candidates(kappa, t)``: absolute next-arrival time per route, given the
  current document-event count kappa and current time t;
- ``after_event(kappa, t, route, was_arrival)``: notification that a document
  event happened;
- ``size_uniforms(kappa, route)``: the (u, aux) pair for the size of the
  arrival that won at event index kappa.

``RenewalArrivals`` is the ordinary independent mode. ``SharedArrivals`` views
a :class:`CouplingStream`, which stores one exponential offset and one size
uniform pair per (event index, route) so that the flow-level limit and every
c-scaled packet network consume identical randomness; by memorylessness,
re-basing the offsets at each document event leaves the law unchanged.
"""

from __future__ import annotations

import math
from typing import Sequence

from .flowstate import FlowState
from . import rng as _rng


class RenewalArrivals:
    """Independent Poisson arrivals; a route's clock is redrawn when it fires."""

    def __init__(self, nu: Sequence[float], seed: int, *path):
        self.nu = tuple(float(v) for v in nu)
        self._arr_gen = _rng.generator(seed, _rng.ARRIVALS, *path)
        self._size_gen = _rng.generator(seed, _rng.SIZES, *path)
        self._next = [self._draw(i, 0.0) for i in range(len(self.nu))]

    def _draw(self, route: int, t: float) -> float:
        if self.nu[route] <= 0.0:
            return math.inf
        return t - math.log1p(-self._arr_gen.random()) / self.nu[route]

    def candidates(self, kappa: int, t: float) -> list[float]:
        return self._next

    def after_event(self, kappa: int, t: float, route: int, was_arrival: bool) -> None:
        if was_arrival:
            self._next[route] = self._draw(route, t)

    def size_uniforms(self, kappa: int, route: int) -> tuple[float, float]:
        u = self._size_gen.random()
        aux = self._size_gen.random()
        return u, aux


class CouplingStream:
    """Shared randomness for one coupled replication across every scale.

    Per event index kappa and route: an exponential arrival offset E, a size
    uniform u, and a rounding uniform aux. Draws happen lazily inside the
    stream, so all consumers see identical values regardless of how far each
    one has advanced. Also carries the initial flow state of the limit and
    rounding uniforms to integerize it per scale c.
    """

    def __init__(self, seed: int, nu: Sequence[float], initial: FlowState | None = None,
                 route_ids: Sequence[str] | None = None):
        self.seed = int(seed)
        self.nu = tuple(float(v) for v in nu)
        self._gen = _rng.generator(seed, _rng.COUPLING)
        self._E: list[tuple[float, ...]] = []
        self._u: list[tuple[float, ...]] = []
        self._aux: list[tuple[float, ...]] = []
        if initial is None and route_ids is not None:
            initial = FlowState.empty(route_ids)
        self.initial_limit = initial
        init_gen = _rng.generator(seed, _rng.INITIAL)
        self._init_round = (
            tuple(tuple(init_gen.random() for _ in ys) for ys in initial.residuals)
            if initial is not None
            else ()
        )

    def _ensure(self, kappa: int) -> None:
        while len(self._E) <= kappa:
            offs = []
            for v in self.nu:
                u = self._gen.random()
                offs.append(math.inf if v <= 0.0 else -math.log1p(-u) / v)
            self._E.append(tuple(offs))
            self._u.append(tuple(self._gen.random() for _ in self.nu))
            self._aux.append(tuple(self._gen.random() for _ in self.nu))

    def offsets(self, kappa: int) -> tuple[float, ...]:
        self._ensure(kappa)
        return self._E[kappa]

    def size_uniforms(self, kappa: int, route: int) -> tuple[float, float]:
        self._ensure(kappa)
        return self._u[kappa][route], self._aux[kappa][route]

    def initial_packet_residuals(self, c: int) -> list[list[int]]:
        """Integerized initial residuals at scale c (randomized rounding with
        the shared per-document uniforms, floored at one packet)."""
        out = []
        for ys, rounds in zip(self.initial_limit.residuals, self._init_round):
            row = []
            for y, r in zip(ys, rounds):
                t = c * y
                k = math.floor(t)
                if r < t - k:
                    k += 1
                row.append(max(1, k))
            out.append(row)
        return out


class SharedArrivals:
    """Arrival-source view of a CouplingStream: candidates are rebased to
    t + E_i^kappa after every document event."""

    def __init__(self, stream: CouplingStream):
        self.stream = stream

    def candidates(self, kappa: int, t: float) -> list[float]:
        return [t + e for e in self.stream.offsets(kappa)]

    def after_event(self, kappa: int, t: float, route: int, was_arrival: bool) -> None:
        return None

    def size_uniforms(self, kappa: int, route: int) -> tuple[float, float]:
        return self.stream.size_uniforms(kappa, route)
