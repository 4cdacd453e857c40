"""Network parameterization shared by the exact engine and both simulators.

A network is queues plus ordered routes (repeats allowed), per-route document
arrival rates and mean sizes, per-queue service capacity profiles and queue
disciplines. Everything downstream (product-form formulas, packet and flow
simulators) consumes the validated, immutable :class:`Network`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .errors import (
    ConfigError,
    EmptyRoute,
    KernelNotStochastic,
    NonPositiveRate,
    UnknownQueue,
    UnknownRoute,
)

DEFAULT_M_CHECK = 64
_ROW_TOL = 1e-9


class TailRule(str, enum.Enum):
    CONSTANT = "constant-after-cap"
    PROPORTIONAL = "proportional-after-cap"


class Stability(enum.Enum):
    STABLE = "Stable"
    UNSTABLE = "Unstable"
    UNDETERMINED = "Undetermined"


@dataclass(frozen=True)
class ServiceProfile:
    """Total service rate table phi(1..m_cap) plus a tail rule beyond the cap."""

    values: tuple[float, ...]
    tail_rule: TailRule = TailRule.CONSTANT

    def __post_init__(self):
        if not self.values:
            raise ConfigError("service profile needs at least one rate")
        for idx, v in enumerate(self.values):
            if not (v > 0) or not math.isfinite(v):
                raise NonPositiveRate(f"phi({idx + 1}) = {v!r} must be positive")

    @property
    def cap(self) -> int:
        return len(self.values)

    def rate(self, m: int) -> float:
        if m <= 0:
            return 0.0
        if m <= self.cap:
            return self.values[m - 1]
        if self.tail_rule is TailRule.CONSTANT:
            return self.values[-1]
        return self.values[-1] * m / self.cap

    def scaled(self, c: float) -> "ServiceProfile":
        return ServiceProfile(tuple(v * c for v in self.values), self.tail_rule)


class DisciplineKind(str, enum.Enum):
    PROCESSOR_SHARING = "processor-sharing"
    FIFO = "fifo"
    LIFO_PREEMPTIVE = "lifo-preemptive"
    CUSTOM = "custom"


@dataclass(frozen=True)
class Discipline:
    """Position kernels: gamma rows give the service share per position given m
    packets, delta rows the insertion distribution given m packets after
    insertion. Custom kernels are finite tables (row m has m entries);
    builtins are closed-form and total."""

    kind: DisciplineKind = DisciplineKind.PROCESSOR_SHARING
    gamma: tuple[tuple[float, ...], ...] | None = None
    delta: tuple[tuple[float, ...], ...] | None = None

    def __post_init__(self):
        if self.kind is DisciplineKind.CUSTOM:
            if self.gamma is None or self.delta is None:
                raise ConfigError("custom discipline requires gamma and delta tables")

    @property
    def table_depth(self) -> int:
        if self.kind is not DisciplineKind.CUSTOM:
            return 0
        return min(len(self.gamma), len(self.delta))

    def validate_rows(self, up_to: int, *, where: str = "") -> None:
        """Check row sums are 1 for all m <= up_to (no-op for builtins)."""
        if self.kind is not DisciplineKind.CUSTOM:
            return
        for name, table in (("gamma", self.gamma), ("delta", self.delta)):
            for m in range(1, min(up_to, len(table)) + 1):
                row = table[m - 1]
                if len(row) != m:
                    raise KernelNotStochastic(
                        f"{where}{name} row m={m} has {len(row)} entries, expected {m}"
                    )
                s = math.fsum(row)
                if abs(s - 1.0) > _ROW_TOL or any(p < 0 for p in row):
                    raise KernelNotStochastic(
                        f"{where}{name} row m={m} sums to {s!r}, expected 1"
                    )

    def gamma_row(self, m: int) -> tuple[float, ...]:
        if m < 1:
            raise ValueError("gamma row needs m >= 1")
        if self.kind is DisciplineKind.PROCESSOR_SHARING:
            return (1.0 / m,) * m
        if self.kind is DisciplineKind.FIFO:
            return (1.0,) + (0.0,) * (m - 1)
        if self.kind is DisciplineKind.LIFO_PREEMPTIVE:
            return (0.0,) * (m - 1) + (1.0,)
        if m > len(self.gamma):
            raise KernelNotStochastic(f"gamma table has no row for m={m}")
        return tuple(self.gamma[m - 1])

    def delta_row(self, m: int) -> tuple[float, ...]:
        """Insertion distribution over positions 1..m given m packets after."""
        if m < 1:
            raise ValueError("delta row needs m >= 1")
        if self.kind is DisciplineKind.PROCESSOR_SHARING:
            return (1.0 / m,) * m
        if self.kind in (DisciplineKind.FIFO, DisciplineKind.LIFO_PREEMPTIVE):
            return (0.0,) * (m - 1) + (1.0,)
        if m > len(self.delta):
            raise KernelNotStochastic(f"delta table has no row for m={m}")
        return tuple(self.delta[m - 1])


@dataclass(frozen=True)
class Route:
    """Ordered queue visits (j_1, ..., j_k), repeats allowed."""

    order: tuple[str, ...]

    def __post_init__(self):
        if not self.order:
            raise EmptyRoute("route order must be non-empty")

    @property
    def length(self) -> int:
        return len(self.order)

    @property
    def distinct_queues(self) -> tuple[str, ...]:
        return tuple(sorted(set(self.order)))


@dataclass(frozen=True)
class Network:
    queues: tuple[str, ...]
    route_ids: tuple[str, ...]
    routes: Mapping[str, Route]
    nu: Mapping[str, float]
    mean_size: Mapping[str, float]
    phi: Mapping[str, ServiceProfile]
    discipline: Mapping[str, Discipline]
    m_check: int = DEFAULT_M_CHECK
    # (queue, route) incidence pairs, route-declared-major, queues sorted.
    incidences: tuple[tuple[str, str], ...] = field(default=(), compare=False)
    _zeta: Mapping[tuple[str, str], int] = field(default_factory=dict, compare=False)

    @property
    def J(self) -> int:
        return len(self.queues)

    @property
    def I(self) -> int:
        return len(self.route_ids)

    def rho(self, route_id: str) -> float:
        return self.nu[route_id] * self.mean_size[route_id]

    def load(self, queue_id: str) -> float:
        return math.fsum(
            self._zeta[(queue_id, i)] * self.rho(i)
            for i in self.route_ids
            if (queue_id, i) in self._zeta
        )

    def routes_through(self, queue_id: str) -> tuple[str, ...]:
        return tuple(i for i in self.route_ids if (queue_id, i) in self._zeta)


def zeta(net: Network, queue_id: str, route_id: str) -> int:
    """Multiplicity of a queue in a route's visit order (0 if absent)."""
    if queue_id not in net.phi:
        raise UnknownQueue(f"unknown queue {queue_id!r}")
    if route_id not in net.routes:
        raise UnknownRoute(f"unknown route {route_id!r}")
    return net._zeta.get((queue_id, route_id), 0)


def _parse_phi(raw, queue_id: str) -> ServiceProfile:
    if isinstance(raw, ServiceProfile):
        return raw
    if isinstance(raw, (int, float)):
        return ServiceProfile((float(raw),))
    try:
        values = tuple(float(v) for v in raw["values"])
        tail = TailRule(raw.get("tail", TailRule.CONSTANT.value))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad phi entry for queue {queue_id!r}: {exc}") from exc
    return ServiceProfile(values, tail)


def _parse_discipline(raw, queue_id: str) -> Discipline:
    if isinstance(raw, Discipline):
        return raw
    if raw is None:
        return Discipline()
    if isinstance(raw, str):
        try:
            return Discipline(DisciplineKind(raw))
        except ValueError as exc:
            raise ConfigError(f"unknown discipline {raw!r} for queue {queue_id!r}") from exc
    try:
        kind = DisciplineKind(raw["kind"])
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad discipline entry for queue {queue_id!r}: {exc}") from exc
    if kind is not DisciplineKind.CUSTOM:
        return Discipline(kind)
    gamma = tuple(tuple(float(p) for p in row) for row in raw["gamma"])
    delta = tuple(tuple(float(p) for p in row) for row in raw["delta"])
    return Discipline(kind, gamma, delta)


def build_network(spec: Mapping, m_check: int = DEFAULT_M_CHECK) -> Network:
    """Validate a declarative description and return an immutable Network.

    Expected keys: ``queues`` (list of ids), ``routes`` (id -> ordered queue
    list), ``nu`` and ``mean_size`` (route id -> positive rate), optional
    ``phi`` (queue id -> rate table, default constant 1) and ``discipline``
    (queue id -> kind or kernel tables, default processor-sharing).
    """
    try:
        queue_list = list(spec["queues"])
        route_map = dict(spec["routes"])
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"network spec needs 'queues' and 'routes': {exc}") from exc
    if not queue_list:
        raise ConfigError("network needs at least one queue")
    if not route_map:
        raise ConfigError("network needs at least one route")

    queues = tuple(sorted(str(q) for q in queue_list))
    if len(set(queues)) != len(queues):
        raise ConfigError("duplicate queue identifiers")
    queue_set = set(queues)
    route_ids = tuple(str(r) for r in route_map)

    routes: dict[str, Route] = {}
    for rid in route_ids:
        order = tuple(str(q) for q in route_map[rid])
        if not order:
            raise EmptyRoute(f"route {rid!r} has an empty order")
        for pos, q in enumerate(order):
            if q not in queue_set:
                raise UnknownQueue(f"route {rid!r} order[{pos}] references unknown queue {q!r}")
        routes[rid] = Route(order)

    nu_raw = spec.get("nu", {})
    mean_raw = spec.get("mean_size", {})
    nu: dict[str, float] = {}
    mean_size: dict[str, float] = {}
    for rid in route_ids:
        v = float(nu_raw.get(rid, 0.0) if isinstance(nu_raw, Mapping) else nu_raw)
        if v < 0 or not math.isfinite(v):
            raise NonPositiveRate(f"nu[{rid!r}] = {v!r}")
        nu[rid] = v
        s = float(mean_raw.get(rid, 1.0) if isinstance(mean_raw, Mapping) else mean_raw)
        if not (s > 0) or not math.isfinite(s):
            raise NonPositiveRate(f"mean_size[{rid!r}] = {s!r}")
        mean_size[rid] = s

    phi_raw = spec.get("phi", {})
    phi = {q: _parse_phi(phi_raw.get(q, 1.0), q) for q in queues}
    disc_raw = spec.get("discipline", {})
    discipline = {}
    for q in queues:
        d = _parse_discipline(disc_raw.get(q), q)
        d.validate_rows(m_check, where=f"queue {q!r} ")
        discipline[q] = d

    zeta_map: dict[tuple[str, str], int] = {}
    incidences: list[tuple[str, str]] = []
    for rid in route_ids:
        for q in routes[rid].distinct_queues:
            zeta_map[(q, rid)] = routes[rid].order.count(q)
            incidences.append((q, rid))

    return Network(
        queues=queues,
        route_ids=route_ids,
        routes=routes,
        nu=nu,
        mean_size=mean_size,
        phi=phi,
        discipline=discipline,
        m_check=m_check,
        incidences=tuple(incidences),
        _zeta=zeta_map,
    )


def network_to_config(net: Network) -> dict:
    """Canonical declarative form; build_network(network_to_config(net)) == net."""
    cfg: dict = {
        "queues": list(net.queues),
        "routes": {rid: list(net.routes[rid].order) for rid in net.route_ids},
        "nu": {rid: net.nu[rid] for rid in net.route_ids},
        "mean_size": {rid: net.mean_size[rid] for rid in net.route_ids},
        "phi": {
            q: {"values": list(net.phi[q].values), "tail": net.phi[q].tail_rule.value}
            for q in net.queues
        },
        "discipline": {},
    }
    for q in net.queues:
        d = net.discipline[q]
        if d.kind is DisciplineKind.CUSTOM:
            cfg["discipline"][q] = {
                "kind": d.kind.value,
                "gamma": [list(r) for r in d.gamma],
                "delta": [list(r) for r in d.delta],
            }
        else:
            cfg["discipline"][q] = d.kind.value
    return cfg


def stability_check(net: Network, tol: float = 0.0) -> Stability:
    """Ergodicity verdict from the per-queue load and tail rule.

    Under a constant tail the B_j series is eventually geometric with ratio
    load/phi(cap): Stable iff every ratio < 1. Proportional tails make the
    term ratio vanish, so those queues are always stable. A positive tol
    reports Undetermined when some constant-tail ratio sits within tol of 1.
    """
    verdict = Stability.STABLE
    for q in net.queues:
        profile = net.phi[q]
        load = net.load(q)
        if load == 0.0:
            continue
        if profile.tail_rule is TailRule.PROPORTIONAL:
            continue
        ratio = load / profile.values[-1]
        if tol > 0 and abs(ratio - 1.0) <= tol:
            verdict = Stability.UNDETERMINED
            continue
        if ratio >= 1.0:
            return Stability.UNSTABLE
    return verdict
