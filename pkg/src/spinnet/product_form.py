"""Exact stationary quantities of the network from its closed-form expressions.

Route counts ``n`` are plain tuples aligned with ``Network.route_ids``;
packet placements ``m`` are :class:`QueueRouteCounts` aligned with
``Network.incidences``. All normalizing constants are handled in the log
domain because the terms mix factorials with capacity products.
"""

from __future__ import annotations

import itertools
import math
import threading
from dataclasses import dataclass
from typing import Any, Iterator, Mapping, Sequence

from .errors import ExplosionGuard, UnknownRoute, UnstableNetwork, ZeroCount
from .topology import Network, Stability, TailRule, stability_check

DEFAULT_ENUM_CAP = 10_000_000
NEG_INF = float("-inf")


@dataclass(frozen=True)
class QueueRouteCounts:
    """Packets per (queue, route) incidence, aligned with Network.incidences."""

    counts: tuple[int, ...]

    def as_dict(self, net: Network) -> dict[tuple[str, str], int]:
        return dict(zip(net.incidences, self.counts))

    def queue_totals(self, net: Network) -> dict[str, int]:
        totals = {q: 0 for q in net.queues}
        for (q, _), c in zip(net.incidences, self.counts):
            totals[q] += c
        return totals


def route_counts(net: Network, by_route: Mapping[str, int]) -> tuple[int, ...]:
    """Mapping form -> canonical tuple aligned with route_ids (missing = 0)."""
    for rid in by_route:
        if rid not in net.routes:
            raise UnknownRoute(f"unknown route {rid!r}")
    return tuple(int(by_route.get(rid, 0)) for rid in net.route_ids)


def _check_n(net: Network, n: Sequence[int]) -> tuple[int, ...]:
    n = tuple(int(v) for v in n)
    if len(n) != net.I:
        raise ValueError(f"n has length {len(n)}, network has {net.I} routes")
    if any(v < 0 for v in n):
        raise ValueError("route counts must be non-negative")
    return n


def state_space_size(net: Network, n: Sequence[int]) -> int:
    """|S(n)| = prod over routes of compositions of n_i over distinct queues."""
    n = _check_n(net, n)
    size = 1
    for rid, ni in zip(net.route_ids, n):
        d = len(net.routes[rid].distinct_queues)
        size *= math.comb(ni + d - 1, d - 1)
    return size


def _compositions_colex(total: int, parts: int) -> Iterator[tuple[int, ...]]:
    if parts == 1:
        yield (total,)
        return
    for last in range(total + 1):
        for head in _compositions_colex(total - last, parts - 1):
            yield head + (last,)


def enumerate_s(
    net: Network, n: Sequence[int], cap: int = DEFAULT_ENUM_CAP
) -> Iterator[QueueRouteCounts]:
    """Yield each m in S(n) exactly once: routes in declared order, per-route
    compositions in colexicographic order over that route's distinct queues."""
    n = _check_n(net, n)
    size = state_space_size(net, n)
    if size > cap:
        raise ExplosionGuard(f"|S(n)| = {size} exceeds cap {cap}")
    per_route = [
        list(_compositions_colex(ni, len(net.routes[rid].distinct_queues)))
        for rid, ni in zip(net.route_ids, n)
    ]
    # Incidences are route-major with queues sorted, matching distinct_queues.
    for combo in itertools.product(*per_route):
        flat: list[int] = []
        for part in combo:
            flat.extend(part)
        yield QueueRouteCounts(tuple(flat))


class _LogSum:
    """Streaming log-sum-exp accumulator."""

    __slots__ = ("_max", "_sum")

    def __init__(self):
        self._max = NEG_INF
        self._sum = 0.0

    def add(self, x: float) -> None:
        if x == NEG_INF:
            return
        if x <= self._max:
            self._sum += math.exp(x - self._max)
        else:
            self._sum = self._sum * math.exp(self._max - x) + 1.0
            self._max = x

    def value(self) -> float:
        if self._sum <= 0.0:
            return NEG_INF
        return self._max + math.log(self._sum)


class _NetIndex:
    """Per-network lookup tables reused by every weight evaluation."""

    def __init__(self, net: Network):
        self.net = net
        self.queue_pos = {q: k for k, q in enumerate(net.queues)}
        # incidence -> queue slot, log zeta
        self.inc_queue = [self.queue_pos[q] for q, _ in net.incidences]
        self.log_zeta = [math.log(net._zeta[inc]) for inc in net.incidences]
        self._log_phi_cum: list[list[float]] = [[0.0] for _ in net.queues]

    def log_phi_cum(self, queue_slot: int, m: int) -> float:
        """log prod_{l<=m} phi_j(l), extended lazily."""
        cum = self._log_phi_cum[queue_slot]
        if m >= len(cum):
            profile = self.net.phi[self.net.queues[queue_slot]]
            for l in range(len(cum), m + 1):
                cum.append(cum[-1] + math.log(profile.rate(l)))
        return cum[m]

    def log_weight(self, m: QueueRouteCounts) -> float:
        """log of the product-form weight of one placement m."""
        totals = [0] * len(self.queue_pos)
        log_num = 0.0
        log_fact = 0.0
        for slot, lz, c in zip(self.inc_queue, self.log_zeta, m.counts):
            if c:
                totals[slot] += c
                log_num += c * lz
                log_fact -= math.lgamma(c + 1)
        for slot, mj in enumerate(totals):
            if mj:
                log_fact += math.lgamma(mj + 1)
                log_num -= self.log_phi_cum(slot, mj)
        return log_fact + log_num


_INDEX_LOCK = threading.Lock()


def _index_for(net: Network) -> _NetIndex:
    idx = getattr(net, "_pf_index", None)
    if idx is None:
        with _INDEX_LOCK:
            idx = getattr(net, "_pf_index", None)
            if idx is None:
                idx = _NetIndex(net)
                object.__setattr__(net, "_pf_index", idx)
    return idx


def log_bn(net: Network, n: Sequence[int], cap: int = DEFAULT_ENUM_CAP) -> float:
    """log B_n: log-sum-exp of placement weights over S(n); B_0 = 1."""
    idx = _index_for(net)
    acc = _LogSum()
    for m in enumerate_s(net, n, cap):
        acc.add(idx.log_weight(m))
    return acc.value()


def closed_pmf(
    net: Network, n: Sequence[int], cap: int = DEFAULT_ENUM_CAP
) -> dict[QueueRouteCounts, float]:
    """Stationary law of packet placements for the closed network with n fixed."""
    idx = _index_for(net)
    weights: dict[QueueRouteCounts, float] = {}
    acc = _LogSum()
    for m in enumerate_s(net, n, cap):
        w = idx.log_weight(m)
        weights[m] = w
        acc.add(w)
    log_total = acc.value()
    return {m: math.exp(w - log_total) for m, w in weights.items()}


class BnCache:
    """Memoized log B_n for one network; shared by allocation policies.

    Concurrent lookups are safe: inserts are idempotent (same key always maps
    to the same value), so last-write-wins is harmless.
    """

    def __init__(self, net: Network, cap: int = DEFAULT_ENUM_CAP):
        self.net = net
        self.cap = cap
        self._memo: dict[tuple[int, ...], float] = {}

    def log_bn(self, n: tuple[int, ...]) -> float:
        v = self._memo.get(n)
        if v is None:
            v = log_bn(self.net, n, self.cap)
            self._memo[n] = v
        return v


def spinning_allocation(
    net: Network, n: Sequence[int], cache: BnCache | None = None
) -> tuple[float, ...]:
    """Per-route stationary packet throughput of the closed network,
    Lambda_i(n) = B_{n-e_i} / B_n, with Lambda_i = 0 where n_i = 0."""
    n = _check_n(net, n)
    if cache is None:
        cache = BnCache(net)
    log_b_n = None
    out = []
    for k, ni in enumerate(n):
        if ni == 0:
            out.append(0.0)
            continue
        if log_b_n is None:
            log_b_n = cache.log_bn(n)
        down = n[:k] + (ni - 1,) + n[k + 1 :]
        out.append(math.exp(cache.log_bn(down) - log_b_n))
    return tuple(out)


def theoretical_throughput(net: Network, n: Sequence[int], route_id: str) -> float:
    """Per-document traversal rate Lambda_i(n) / n_i for a closed network."""
    n = _check_n(net, n)
    if route_id not in net.routes:
        raise UnknownRoute(f"unknown route {route_id!r}")
    k = net.route_ids.index(route_id)
    if n[k] == 0:
        raise ZeroCount(f"route {route_id!r} has no documents in n")
    return spinning_allocation(net, n)[k] / n[k]


def compute_bj(net: Network, queue_id: str, tol: float = 1e-12) -> float:
    """Normalizing constant B_j of a single queue (includes the empty term).

    Constant tails are summed exactly (geometric beyond the cap); proportional
    tails are summed until the geometric tail bound contributes relative mass
    below tol, and that bound is added as a correction.
    """
    profile = net.phi[queue_id]
    a = net.load(queue_id)
    if a == 0.0:
        return 1.0
    total = 1.0
    term = 1.0
    for m in range(1, profile.cap + 1):
        term *= a / profile.rate(m)
        total += term
    if profile.tail_rule is TailRule.CONSTANT:
        r = a / profile.values[-1]
        if r >= 1.0:
            raise UnstableNetwork(f"queue {queue_id!r}: tail ratio {r} >= 1")
        return total + term * r / (1.0 - r)
    m = profile.cap
    while True:
        m += 1
        ratio = a / profile.rate(m)
        if ratio < 1.0:
            bound = term * ratio / (1.0 - ratio)
            if bound < tol * total:
                return total + bound
        term *= a / profile.rate(m)
        total += term
        if m > 10_000_000:
            raise UnstableNetwork(f"queue {queue_id!r}: B_j series did not converge")


def log_b(net: Network, tol: float = 1e-12) -> float:
    """log of the open-network constant B = prod_j B_j."""
    return math.fsum(math.log(compute_bj(net, q, tol)) for q in net.queues)


@dataclass(frozen=True)
class OpenPmf:
    """Box-truncated stationary law of route counts, P(N=n) = B_n rho^n / B."""

    probs: dict[tuple[int, ...], float]
    tail_mass: float
    log_normalizer: float


def open_n_pmf(
    net: Network,
    box: Sequence[int],
    cap: int = DEFAULT_ENUM_CAP,
    tol: float = 1e-12,
) -> OpenPmf:
    """Evaluate P(N=n) for every n with n_i <= box_i; report truncated mass."""
    if stability_check(net) is not Stability.STABLE:
        raise UnstableNetwork("open-network law requires a stable network")
    box = _check_n(net, box)
    log_norm = log_b(net, tol)
    log_rho = [math.log(net.rho(rid)) if net.rho(rid) > 0 else NEG_INF for rid in net.route_ids]
    probs: dict[tuple[int, ...], float] = {}
    covered = 0.0
    for n in itertools.product(*(range(b + 1) for b in box)):
        lw = log_bn(net, n, cap)
        for lr, ni in zip(log_rho, n):
            if ni:
                lw += ni * lr
        p = math.exp(lw - log_norm) if lw > NEG_INF else 0.0
        probs[n] = p
        covered += p
    return OpenPmf(probs=probs, tail_mass=max(0.0, 1.0 - covered), log_normalizer=log_norm)


def flow_level_pmf(
    net: Network,
    y: Mapping[str, Sequence[int]],
    laws: Mapping[str, Any],
    cap: int = DEFAULT_ENUM_CAP,
    tol: float = 1e-12,
) -> float:
    """Stationary probability of a discrete flow-level state.

    ``y`` maps route ids to the residual sizes (positive integers) of its
    in-transfer documents; ``laws`` maps route ids to discrete size laws
    exposing ``tail(z)``. The value is B_n/B times, per route, the multinomial
    over repeated residuals and the product of nu_i * P(X_i >= y_ik).
    """
    if stability_check(net) is not Stability.STABLE:
        raise UnstableNetwork("flow-level law requires a stable network")
    n = []
    log_w = 0.0
    for rid in net.route_ids:
        residuals = [int(v) for v in y.get(rid, ())]
        if any(v < 1 for v in residuals):
            raise ValueError(f"route {rid!r}: residuals must be positive integers")
        n.append(len(residuals))
        if not residuals:
            continue
        law = laws[rid]
        nu = net.nu[rid]
        log_w += math.lgamma(len(residuals) + 1)
        seen: dict[int, int] = {}
        for v in residuals:
            seen[v] = seen.get(v, 0) + 1
        for mult in seen.values():
            log_w -= math.lgamma(mult + 1)
        for v in residuals:
            t = law.tail(v)
            if nu <= 0 or t <= 0:
                return 0.0
            log_w += math.log(nu) + math.log(t)
    log_p = log_bn(net, tuple(n), cap) + log_w - log_b(net, tol)
    return math.exp(log_p) if log_p > NEG_INF else 0.0
