"""Stochastic flow-level model: CTMC fast path and the generalized simulator
with deterministic linear drain of non-atomic residual sizes.

Between document events every route-i document drains at Lambda_i(n)/n_i.
Residuals are stored per route as a sorted list of virtual values v = y + off_i
where off_i accumulates the drain, so a segment costs O(1) per route and the
next departure of route i is always its first element.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

from . import rng as _rng
from .distributions import Law
from .errors import (
    AtomicSizeLaw,
    EventBudgetExceeded,
    SimultaneityDetected,
    StarvedRoute,
)
from .flowstate import FlowState, flow_distance  # noqa: F401  (re-exported)
from .product_form import DEFAULT_ENUM_CAP, BnCache, spinning_allocation
from .stats import DwellAccumulator, EmpiricalPmf, Trajectory
from .streams import RenewalArrivals, SharedArrivals  # noqa: F401
from .topology import Network

DEFAULT_EVENT_BUDGET = 100_000_000
DEFAULT_TIE_TOL = 1e-12
_REBASE_OFFSET = 1e9


@dataclass
class AllocationPolicy:
    """Total map from route counts n to a per-route rate vector."""

    name: str
    route_ids: tuple[str, ...]
    rates: Callable[[tuple[int, ...]], tuple[float, ...]]
    network: Network | None = None
    _memo: dict = field(default_factory=dict, repr=False)

    def __call__(self, n: tuple[int, ...]) -> tuple[float, ...]:
        out = self._memo.get(n)
        if out is None:
            out = tuple(float(v) for v in self.rates(n))
            if len(out) != len(self.route_ids):
                raise ValueError("allocation has wrong arity")
            for ni, rate in zip(n, out):
                if ni == 0 and rate != 0.0:
                    raise ValueError("allocation must vanish on empty routes")
                if rate < 0.0:
                    raise ValueError("allocation rates must be non-negative")
            self._memo[n] = out
        return out


def spinning_policy(net: Network, cap: int = DEFAULT_ENUM_CAP) -> AllocationPolicy:
    """Bandwidth allocation equal to the per-route stationary throughput of the
    closed network with n packets: Lambda_i(n) = B_{n-e_i}/B_n."""
    cache = BnCache(net, cap)
    return AllocationPolicy(
        name="spinning",
        route_ids=net.route_ids,
        rates=lambda n: spinning_allocation(net, n, cache),
        network=net,
    )


def single_link_ps_policy(route_id: str = "r0", rate: float = 1.0) -> AllocationPolicy:
    """One route through one unit-rate processor-sharing link (test fixture)."""
    return AllocationPolicy(
        name="single-link-ps",
        route_ids=(route_id,),
        rates=lambda n: (rate if n[0] > 0 else 0.0,),
    )


@dataclass(frozen=True)
class FlowEvent:
    time: float
    kind: str  # "arrival" | "departure"
    route: str
    size: float | None = None


@dataclass
class FlowRunResult:
    events: list[FlowEvent]
    trajectory: Trajectory
    flow_samples: list[tuple[float, FlowState]]
    dwell: EmpiricalPmf | None
    final_state: FlowState
    kappa: int


class FlowSim:
    """Generalized stochastic flow-level model under an allocation policy."""

    def __init__(
        self,
        policy: AllocationPolicy,
        sizes: Mapping[str, Law],
        nu: Mapping[str, float],
        seed: int | None = None,
        initial: FlowState | None = None,
        arrivals=None,
        tie_tol: float = DEFAULT_TIE_TOL,
        event_budget: int = DEFAULT_EVENT_BUDGET,
    ):
        self.policy = policy
        self.route_ids = policy.route_ids
        self.sizes = [sizes[rid] for rid in self.route_ids]
        for rid, law in zip(self.route_ids, self.sizes):
            if not law.is_non_atomic:
                raise AtomicSizeLaw(
                    f"route {rid!r}: size law {law!r} has atoms; the flow model "
                    "requires non-atomic document sizes"
                )
        self.nu = [float(nu.get(rid, 0.0)) for rid in self.route_ids]
        if arrivals is None:
            if seed is None:
                raise ValueError("either a seed or an arrivals source is required")
            arrivals = RenewalArrivals(self.nu, seed)
        self.arrivals = arrivals
        self.tie_tol = tie_tol
        self.event_budget = event_budget
        if initial is None:
            initial = FlowState.empty(self.route_ids)
        if initial.route_ids != self.route_ids:
            raise ValueError("initial state routes differ from the policy's")
        self._virt: list[list[float]] = [list(ys) for ys in initial.residuals]
        self._off: list[float] = [0.0] * len(self.route_ids)
        self.t = 0.0
        self.kappa = 0
        self._ran = False

    # -- state helpers ------------------------------------------------------

    def counts(self) -> tuple[int, ...]:
        return tuple(len(v) for v in self._virt)

    def _snapshot(self, drift: Sequence[float] | None = None, dt: float = 0.0) -> FlowState:
        res = []
        for i, virt in enumerate(self._virt):
            off = self._off[i] + (drift[i] * dt if drift is not None else 0.0)
            res.append(tuple(v - off for v in virt))
        return FlowState(self.route_ids, tuple(res))

    def _rebase(self) -> None:
        for i, off in enumerate(self._off):
            virt = self._virt[i]
            if off > _REBASE_OFFSET and (not virt or virt[-1] <= 2.0 * off):
                self._virt[i] = [v - off for v in virt]
                self._off[i] = 0.0

    # -- main loop ----------------------------------------------------------

    def run(
        self,
        horizon: float | None = None,
        grid: Sequence[float] = (),
        record_events: bool = True,
        record_flow: bool = False,
        dwell_burn_in: float | None = None,
        dwell_box: Sequence[int] | None = None,
        max_events: int | None = None,
    ) -> FlowRunResult:
        """Simulate until the time horizon or (gracefully) max_events document
        events; single-shot per simulator instance."""
        if self._ran:
            raise RuntimeError("simulator instances are single-shot; build a new one")
        self._ran = True
        if horizon is None and max_events is None:
            raise ValueError("need a horizon or max_events")
        if horizon is None:
            horizon = math.inf
        if horizon <= 0:
            raise ValueError("horizon must be positive")
        nroutes = len(self.route_ids)
        events: list[FlowEvent] = []
        flow_samples: list[tuple[float, FlowState]] = []
        traj_times = [0.0]
        traj_states = [self.counts()]
        acc = (
            DwellAccumulator(dwell_burn_in or 0.0, tuple(dwell_box) if dwell_box else None)
            if dwell_burn_in is not None
            else None
        )
        grid_pts = sorted(g for g in grid if 0.0 < g <= horizon)
        gi = 0

        while True:
            n = self.counts()
            rates = self.policy(n)
            drift = [0.0] * nroutes
            for i, ni in enumerate(n):
                if ni > 0:
                    if rates[i] <= 0.0:
                        raise StarvedRoute(
                            f"route {self.route_ids[i]!r}: zero allocation with "
                            f"{ni} documents in transfer"
                        )
                    drift[i] = rates[i] / ni

            arr = self.arrivals.candidates(self.kappa, self.t)
            # Candidate times: per-route arrivals plus the two earliest
            # departures per route; the pairwise scan enforces the
            # no-simultaneity assumption.
            scan: list[float] = [a for a in arr if math.isfinite(a)]
            best_t = math.inf
            best_kind = -1  # 0 arrival, 1 departure
            best_route = -1
            for i in range(nroutes):
                a = arr[i]
                if a < best_t:
                    best_t, best_kind, best_route = a, 0, i
            for i, virt in enumerate(self._virt):
                if virt:
                    d1 = self.t + (virt[0] - self._off[i]) / drift[i]
                    scan.append(d1)
                    if len(virt) > 1:
                        scan.append(self.t + (virt[1] - self._off[i]) / drift[i])
                    if d1 < best_t:
                        best_t, best_kind, best_route = d1, 1, i

            if len(scan) > 1:
                scan.sort()
                for a, b in zip(scan, scan[1:]):
                    if b - a <= self.tie_tol * max(1.0, abs(a)):
                        raise SimultaneityDetected(
                            f"candidate event times {a!r} and {b!r} coincide"
                        )

            stop = min(best_t, horizon)
            while gi < len(grid_pts) and grid_pts[gi] <= stop:
                g = grid_pts[gi]
                flow_samples.append((g, self._snapshot(drift, g - self.t)))
                gi += 1

            if best_t > horizon:
                if acc is not None:
                    acc.add(self.t, horizon, n)
                for i in range(nroutes):
                    if drift[i]:
                        self._off[i] += drift[i] * (horizon - self.t)
                self.t = horizon
                break
            if best_t == math.inf:
                break  # nothing can ever happen

            if self.kappa >= self.event_budget:
                raise EventBudgetExceeded(f"event budget {self.event_budget} exhausted")
            if best_t <= self.t:
                raise SimultaneityDetected(
                    f"event time {best_t!r} does not exceed the previous {self.t!r}"
                )
            if acc is not None:
                acc.add(self.t, best_t, n)
            for i in range(nroutes):
                if drift[i]:
                    self._off[i] += drift[i] * (best_t - self.t)
            dt_kappa = self.kappa
            self.t = best_t

            if best_kind == 1:
                self._virt[best_route].pop(0)
                if record_events:
                    events.append(FlowEvent(self.t, "departure", self.route_ids[best_route]))
            else:
                u, aux = self.arrivals.size_uniforms(dt_kappa, best_route)
                size = self.sizes[best_route].sample_with_uniform(u, aux)
                bisect.insort(self._virt[best_route], size + self._off[best_route])
                if record_events:
                    events.append(
                        FlowEvent(self.t, "arrival", self.route_ids[best_route], size)
                    )
            self.kappa += 1
            self.arrivals.after_event(self.kappa, self.t, best_route, best_kind == 0)
            traj_times.append(self.t)
            traj_states.append(self.counts())
            if record_flow:
                flow_samples.append((self.t, self._snapshot()))
            self._rebase()

        return FlowRunResult(
            events=events,
            trajectory=Trajectory(traj_times, traj_states, horizon),
            flow_samples=flow_samples,
            dwell=acc.finish() if acc is not None else None,
            final_state=self._snapshot(),
            kappa=self.kappa,
        )


def new_flow_sim(
    policy: AllocationPolicy,
    sizes: Mapping[str, Law],
    nu: Mapping[str, float],
    seed: int | None = None,
    initial: FlowState | None = None,
    **options,
) -> FlowSim:
    """Build a generalized flow-level simulator (see :class:`FlowSim`)."""
    return FlowSim(policy, sizes, nu, seed=seed, initial=initial, **options)


@dataclass
class CtmcRunResult:
    trajectory: Trajectory
    dwell: EmpiricalPmf | None
    final_state: tuple[int, ...]
    events: int


def run_ctmc(
    policy: AllocationPolicy,
    nu: Mapping[str, float],
    mu: Mapping[str, float],
    seed: int,
    horizon: float,
    initial: Sequence[int] | None = None,
    dwell_burn_in: float | None = None,
    dwell_box: Sequence[int] | None = None,
    event_budget: int = DEFAULT_EVENT_BUDGET,
) -> CtmcRunResult:
    """Memoryless fast path: route counts jump up at rate nu_i and down at
    rate mu_i * Lambda_i(n); distributionally the exponential-size flow model."""
    route_ids = policy.route_ids
    nu_vec = [float(nu.get(rid, 0.0)) for rid in route_ids]
    mu_vec = [float(mu[rid]) for rid in route_ids]
    gen = _rng.generator(seed, "ctmc")
    n = list(initial) if initial is not None else [0] * len(route_ids)
    if len(n) != len(route_ids) or any(v < 0 for v in n):
        raise ValueError("bad initial route counts")
    t = 0.0
    nevents = 0
    traj_times = [0.0]
    traj_states = [tuple(n)]
    acc = (
        DwellAccumulator(dwell_burn_in or 0.0, tuple(dwell_box) if dwell_box else None)
        if dwell_burn_in is not None
        else None
    )
    while True:
        state = tuple(n)
        rates = policy(state)
        up = nu_vec
        down = [m * r for m, r in zip(mu_vec, rates)]
        total = math.fsum(up) + math.fsum(down)
        if total <= 0.0:
            if acc is not None:
                acc.add(t, horizon, state)
            t = horizon
            break
        dt = -math.log1p(-gen.random()) / total
        tn = t + dt
        if tn >= horizon:
            if acc is not None:
                acc.add(t, horizon, state)
            t = horizon
            break
        if nevents >= event_budget:
            raise EventBudgetExceeded(f"event budget {event_budget} exhausted")
        if acc is not None:
            acc.add(t, tn, state)
        t = tn
        target = gen.random() * total
        running = 0.0
        idx = -1
        is_up = True
        for i, r in enumerate(up):
            running += r
            if target < running:
                idx = i
                break
        if idx < 0:
            is_up = False
            for i, r in enumerate(down):
                running += r
                if target < running:
                    idx = i
                    break
            if idx < 0:
                idx = len(down) - 1
        n[idx] += 1 if is_up else -1
        nevents += 1
        traj_times.append(t)
        traj_states.append(tuple(n))
    return CtmcRunResult(
        trajectory=Trajectory(traj_times, traj_states, horizon),
        dwell=acc.finish() if acc is not None else None,
        final_state=tuple(n),
        events=nevents,
    )
