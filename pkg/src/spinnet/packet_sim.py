"""Discrete-event simulation of the packet-level network with spinning.

Open mode: documents arrive Poisson per route, each keeping one packet that
traverses the route order once per residual unit and departs when the residual
hits zero at the final stage. Closed mode: a fixed packet population loops
forever and traversals are counted. The hot inner loop lives in a kernel with
two interchangeable lanes (compiled / pure Python) selected at import.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import rng as _rng
from .distributions import Law
from .errors import (
    EventBudgetExceeded,
    InconsistentInitialState,
    SimultaneityDetected,
)
from .flowstate import FlowState
from .kernels import BUDGET, CLOSED, DEPARTED, OPEN, REACHED, kernel_class
from .stats import DwellAccumulator, EmpiricalPmf, Trajectory
from .streams import RenewalArrivals
from .topology import DisciplineKind, Network, TailRule

DEFAULT_EVENT_BUDGET = 100_000_000

_EVENT_NAMES = {0: "external-arrival", 1: "stage-advance", 2: "wrap", 3: "document-departure"}


@dataclass(frozen=True)
class PacketClass:
    route: str
    stage: int
    residual: int


@dataclass(frozen=True)
class ExplicitState:
    """Per-queue ordered packet classes; position 0 is the head."""

    queues: tuple[str, ...]
    packets: tuple[tuple[PacketClass, ...], ...]

    @staticmethod
    def empty(net: Network) -> "ExplicitState":
        return ExplicitState(net.queues, tuple(() for _ in net.queues))

    def counts(self, net: Network) -> tuple[int, ...]:
        n = [0] * net.I
        idx = {rid: k for k, rid in enumerate(net.route_ids)}
        for per_queue in self.packets:
            for pkt in per_queue:
                n[idx[pkt.route]] += 1
        return tuple(n)

    def validate(self, net: Network, closed: bool = False) -> None:
        if self.queues != net.queues:
            raise InconsistentInitialState("state queues differ from the network's")
        for q, per_queue in zip(self.queues, self.packets):
            for pkt in per_queue:
                route = net.routes.get(pkt.route)
                if route is None:
                    raise InconsistentInitialState(f"unknown route {pkt.route!r}")
                if not (1 <= pkt.stage <= route.length):
                    raise InconsistentInitialState(
                        f"stage {pkt.stage} outside route {pkt.route!r}"
                    )
                if route.order[pkt.stage - 1] != q:
                    raise InconsistentInitialState(
                        f"packet at queue {q!r} claims stage {pkt.stage} of route "
                        f"{pkt.route!r}, which visits {route.order[pkt.stage - 1]!r}"
                    )
                if not closed and pkt.residual < 1:
                    raise InconsistentInitialState("residuals must be >= 1")


def flow_projection(state: ExplicitState) -> FlowState:
    """Sorted per-route residuals of the documents in an explicit state."""
    by_route: dict[str, list[float]] = {}
    for per_queue in state.packets:
        for pkt in per_queue:
            by_route.setdefault(pkt.route, []).append(pkt.residual)
    route_ids = tuple(sorted(by_route))
    return FlowState(route_ids, tuple(tuple(sorted(by_route[r])) for r in route_ids))


class KernelTables:
    """Index-space network tables shared by both kernel lanes."""

    def __init__(self, net: Network, c: float = 1.0):
        self.net = net
        self.c = float(c)
        self.queue_index = {q: j for j, q in enumerate(net.queues)}
        self.route_index = {r: i for i, r in enumerate(net.route_ids)}
        self.J = net.J
        self.I = net.I
        self.route_orders = [
            [self.queue_index[q] for q in net.routes[r].order] for r in net.route_ids
        ]
        self.route_len = [len(o) for o in self.route_orders]
        self.phi_values = [
            [v * self.c for v in net.phi[q].values] for q in net.queues
        ]
        self.phi_cap = [len(vals) for vals in self.phi_values]
        self.phi_tail = [
            0 if net.phi[q].tail_rule is TailRule.CONSTANT else 1 for q in net.queues
        ]
        code_map = {
            DisciplineKind.PROCESSOR_SHARING: 0,
            DisciplineKind.FIFO: 1,
            DisciplineKind.LIFO_PREEMPTIVE: 2,
            DisciplineKind.CUSTOM: 3,
        }
        self.disc_code = []
        self.gamma_rows: list = []
        self.delta_rows: list = []
        for q in net.queues:
            d = net.discipline[q]
            self.disc_code.append(code_map[d.kind])
            if d.kind is DisciplineKind.CUSTOM:
                # Runtime assertion of rows beyond the build-time m_check.
                d.validate_rows(d.table_depth, where=f"queue {q!r} ")
                self.gamma_rows.append([tuple(r) for r in d.gamma])
                self.delta_rows.append([tuple(r) for r in d.delta])
            else:
                self.gamma_rows.append(None)
                self.delta_rows.append(None)
        self._build_arrays()

    def _build_arrays(self):
        self.route_len_arr = np.asarray(self.route_len, dtype=np.int32)
        self.route_off_arr = np.zeros(self.I + 1, dtype=np.int32)
        np.cumsum(self.route_len_arr, out=self.route_off_arr[1:])
        self.route_flat_arr = np.asarray(
            [j for order in self.route_orders for j in order], dtype=np.int32
        )
        self.phi_cap_arr = np.asarray(self.phi_cap, dtype=np.int32)
        self.phi_off_arr = np.zeros(self.J + 1, dtype=np.int32)
        np.cumsum(self.phi_cap_arr, out=self.phi_off_arr[1:])
        self.phi_flat_arr = np.asarray(
            [v for vals in self.phi_values for v in vals], dtype=np.float64
        )
        self.phi_tail_arr = np.asarray(self.phi_tail, dtype=np.int32)
        self.disc_code_arr = np.asarray(self.disc_code, dtype=np.int32)

        def flatten(tables):
            depth = np.zeros(self.J, dtype=np.int32)
            offs = np.zeros(self.J + 1, dtype=np.int64)
            flat: list[float] = []
            for j, table in enumerate(tables):
                offs[j] = len(flat)
                if table is not None:
                    depth[j] = len(table)
                    for row in table:
                        flat.extend(row)
            offs[self.J] = len(flat)
            return depth, offs, np.asarray(flat, dtype=np.float64)

        self.gamma_depth_arr, self.gamma_off_arr, self.gamma_flat_arr = flatten(self.gamma_rows)
        self.delta_depth_arr, self.delta_off_arr, self.delta_flat_arr = flatten(self.delta_rows)


@dataclass(frozen=True)
class DocEvent:
    time: float
    kind: str  # "arrival" | "departure"
    route: str
    size: int | None = None


@dataclass
class WrapSeries:
    """Cumulative traversal counts per tracked packet, sampled on a grid."""

    times: list[float]
    counts: np.ndarray  # shape (len(times), total packets)
    packet_index: dict[tuple[str, int], int]

    def rate(self, route: str, k: int) -> float:
        if not self.times or self.times[-1] <= 0:
            return 0.0
        col = self.packet_index[(route, k)]
        return float(self.counts[-1, col]) / self.times[-1]


@dataclass
class PacketRunResult:
    doc_events: list[DocEvent]
    trajectory: Trajectory
    flow_samples: list[tuple[float, FlowState]]
    packet_log: list[tuple] | None
    dwell: EmpiricalPmf | None
    occupancy: EmpiricalPmf | None
    wraps: WrapSeries | None
    final_state: ExplicitState
    kappa: int
    packet_events: int


class PacketSim:
    """One simulation run of the packet network (open or closed)."""

    def __init__(
        self,
        net: Network,
        *,
        c: int = 1,
        mode: int = OPEN,
        sizes: Mapping[str, Law] | None = None,
        seed: int | None = None,
        initial: ExplicitState | None = None,
        arrivals=None,
        log_events: bool = False,
        track_occupancy: bool = False,
        event_budget: int = DEFAULT_EVENT_BUDGET,
        kernel_impl: str | None = None,
    ):
        if c < 1:
            raise ValueError("capacity scale c must be >= 1")
        self.net = net
        self.c = int(c)
        self.mode = mode
        self.tables = KernelTables(net, c)
        self.event_budget = int(event_budget)
        self.seed = seed
        if mode == OPEN:
            if sizes is None:
                raise ValueError("open mode needs per-route size laws")
            self.sizes = []
            for rid in net.route_ids:
                law = sizes[rid]
                if not law.integer_support:
                    raise ValueError(
                        f"route {rid!r}: packet model needs integer document sizes"
                    )
                self.sizes.append(law)
            if arrivals is None:
                if seed is None:
                    raise ValueError("need a seed or an arrivals source")
                arrivals = RenewalArrivals(
                    [net.nu[rid] for rid in net.route_ids], seed
                )
            self.arrivals = arrivals
        else:
            self.sizes = None
            self.arrivals = None
        if seed is None:
            raise ValueError("a seed is required")
        cls = kernel_class(kernel_impl)
        self.kernel_impl = getattr(cls, "IMPL", "unknown")
        self.kernel = cls(
            self.tables,
            _rng.bit_generator(seed, _rng.SERVICE, self.c),
            mode,
            log_events,
            track_occupancy,
        )
        if initial is None:
            initial = ExplicitState.empty(net)
        initial.validate(net, closed=(mode == CLOSED))
        per_queue = [
            [
                (self.tables.route_index[p.route], p.stage, p.residual)
                for p in initial.packets[j]
            ]
            for j in range(net.J)
        ]
        if mode == CLOSED:
            # Re-key residual slot as the packet's index on its route.
            seen = [0] * net.I
            for packets in per_queue:
                for k, (route, stage, _res) in enumerate(packets):
                    packets[k] = (route, stage, seen[route])
                    seen[route] += 1
        self.kernel.load_state(per_queue)
        self._ran = False

    # -- projections -------------------------------------------------------

    def explicit_state(self) -> ExplicitState:
        dump = self.kernel.state_dump()
        packets = []
        for per_queue in dump:
            packets.append(
                tuple(
                    PacketClass(self.net.route_ids[r], s, res)
                    for r, s, res in per_queue
                )
            )
        return ExplicitState(self.net.queues, tuple(packets))

    def flow_state(self) -> FlowState:
        res = self.kernel.residuals_by_route()
        return FlowState(
            self.net.route_ids, tuple(tuple(sorted(v)) for v in res)
        )

    def counts(self) -> tuple[int, ...]:
        return self.kernel.counts()

    def traversal_counts(self) -> dict[tuple[str, int], int]:
        snap = self.kernel.wrap_snapshot()
        counts = self.kernel.counts()
        out = {}
        pos = 0
        for i, rid in enumerate(self.net.route_ids):
            for k in range(counts[i]):
                out[(rid, k)] = snap[pos]
                pos += 1
        return out

    # -- main loop ----------------------------------------------------------

    def run(
        self,
        horizon: float,
        grid: Sequence[float] = (),
        record_flow: bool = False,
        dwell_burn_in: float | None = None,
        dwell_box: Sequence[int] | None = None,
    ) -> PacketRunResult:
        if self._ran:
            raise RuntimeError("simulator instances are single-shot; build a new one")
        self._ran = True
        if horizon <= 0:
            raise ValueError("horizon must be positive")
        net = self.net
        kernel = self.kernel
        grid_pts = sorted(g for g in grid if 0.0 < g <= horizon)
        gi = 0
        kappa = 0
        last_doc_t = 0.0
        n_cur = kernel.counts()
        t_mark = 0.0
        doc_events: list[DocEvent] = []
        traj_times = [0.0]
        traj_states = [n_cur]
        flow_samples: list[tuple[float, FlowState]] = []
        acc = (
            DwellAccumulator(dwell_burn_in or 0.0, tuple(dwell_box) if dwell_box else None)
            if dwell_burn_in is not None
            else None
        )
        wrap_times: list[float] = []
        wrap_rows: list[list[int]] = []

        def doc_event(t, kind, route_idx, size=None):
            nonlocal kappa, last_doc_t, n_cur, t_mark
            if acc is not None:
                acc.add(t_mark, t, n_cur)
            t_mark = t
            n_cur = kernel.counts()
            doc_events.append(DocEvent(t, kind, net.route_ids[route_idx], size))
            traj_times.append(t)
            traj_states.append(n_cur)
            if record_flow:
                flow_samples.append((t, self.flow_state()))
            kappa += 1
            last_doc_t = t
            if self.arrivals is not None:
                self.arrivals.after_event(kappa, t, route_idx, kind == "arrival")

        while True:
            if self.mode == OPEN:
                cands = self.arrivals.candidates(kappa, last_doc_t)
                t_arr = math.inf
                i_arr = -1
                for i, a in enumerate(cands):
                    if a < t_arr:
                        t_arr, i_arr = a, i
            else:
                t_arr, i_arr = math.inf, -1
            next_grid = grid_pts[gi] if gi < len(grid_pts) else math.inf
            bound = min(horizon, next_grid, t_arr)
            status = kernel.advance(bound, self.event_budget)
            if status == BUDGET:
                raise EventBudgetExceeded(
                    f"packet event budget {self.event_budget} exhausted"
                )
            if status == DEPARTED:
                doc_event(kernel.t, "departure", kernel.last_route)
                continue
            # reached the bound; grid sampling wins ties with the horizon
            if bound == next_grid and next_grid <= min(horizon, t_arr):
                gi += 1
                if self.mode == CLOSED:
                    wrap_times.append(kernel.t)
                    wrap_rows.append(kernel.wrap_snapshot())
                else:
                    flow_samples.append((kernel.t, self.flow_state()))
                continue
            if bound == horizon and horizon <= t_arr:
                break
            # external arrival
            if t_arr <= last_doc_t:
                raise SimultaneityDetected(
                    f"arrival time {t_arr!r} does not exceed the previous event"
                )
            u, aux = self.arrivals.size_uniforms(kappa, i_arr)
            size = int(self.sizes[i_arr].sample_with_uniform(u, aux))
            kernel.insert_packet(i_arr, size)
            doc_event(kernel.t, "arrival", i_arr, size)

        if acc is not None:
            acc.add(t_mark, horizon, n_cur)

        wraps = None
        if self.mode == CLOSED:
            if not wrap_times or wrap_times[-1] < horizon:
                wrap_times.append(horizon)
                wrap_rows.append(kernel.wrap_snapshot())
            index: dict[tuple[str, int], int] = {}
            pos = 0
            for i, rid in enumerate(net.route_ids):
                for k in range(kernel.counts()[i]):
                    index[(rid, k)] = pos
                    pos += 1
            wraps = WrapSeries(
                wrap_times, np.asarray(wrap_rows, dtype=np.int64), index
            )

        occupancy = None
        if kernel.track_occupancy:
            occ = kernel.occupancy_dict()
            occupancy = EmpiricalPmf(occ, math.fsum(occ.values()) or kernel.t, None)

        return PacketRunResult(
            doc_events=doc_events,
            trajectory=Trajectory(traj_times, traj_states, horizon),
            flow_samples=flow_samples,
            packet_log=list(kernel.log) if kernel.log_events else None,
            dwell=acc.finish() if acc is not None else None,
            occupancy=occupancy,
            wraps=wraps,
            final_state=self.explicit_state(),
            kappa=kappa,
            packet_events=kernel.events,
        )


def new_open_sim(
    net: Network,
    c: int,
    sizes: Mapping[str, Law],
    seed: int,
    initial: ExplicitState | None = None,
    **options,
) -> PacketSim:
    """Open-mode simulator with capacities c * phi and the given size laws."""
    return PacketSim(
        net, c=c, mode=OPEN, sizes=sizes, seed=seed, initial=initial, **options
    )


def new_closed_sim(
    net: Network,
    n: Sequence[int],
    seed: int,
    c: int = 1,
    initial: ExplicitState | None = None,
    **options,
) -> PacketSim:
    """Closed-mode simulator with n_i looping packets per route."""
    if initial is None:
        initial = closed_initial_state(net, n)
    return PacketSim(net, c=c, mode=CLOSED, seed=seed, initial=initial, **options)


def closed_initial_state(net: Network, n: Sequence[int]) -> ExplicitState:
    """Canonical start: every packet at stage 1, appended in route order."""
    n = tuple(int(v) for v in n)
    if len(n) != net.I or any(v < 0 for v in n):
        raise InconsistentInitialState("bad route counts")
    per_queue: dict[str, list[PacketClass]] = {q: [] for q in net.queues}
    for rid, ni in zip(net.route_ids, n):
        first = net.routes[rid].order[0]
        for _ in range(ni):
            per_queue[first].append(PacketClass(rid, 1, 1))
    return ExplicitState(
        net.queues, tuple(tuple(per_queue[q]) for q in net.queues)
    )


def initial_state_from_flow(net: Network, flow: FlowState, seed: int) -> ExplicitState:
    """Explicit state matching a flow state: each document's packet starts at
    stage 1 of its route's first queue, placed by the insertion kernel.

    The conditional stationary packet layout is not available in closed form,
    so simulations started this way need burn-in before stationarity claims.
    """
    gen = _rng.generator(seed, _rng.INITIAL, "placement")
    per_queue: dict[str, list[PacketClass]] = {q: [] for q in net.queues}
    for rid, residuals in zip(flow.route_ids, flow.residuals):
        if rid not in net.routes:
            raise InconsistentInitialState(f"unknown route {rid!r}")
        first = net.routes[rid].order[0]
        disc = net.discipline[first]
        for y in residuals:
            if y < 1 or int(y) != y:
                raise InconsistentInitialState(
                    "packet-model initial residuals must be positive integers"
                )
            q = per_queue[first]
            row = disc.delta_row(len(q) + 1)
            if max(row) >= 1.0:
                pos = row.index(max(row))
            else:
                u = gen.random()
                cum = 0.0
                pos = len(row) - 1
                for idx, p in enumerate(row):
                    cum += p
                    if u < cum:
                        pos = idx
                        break
            q.insert(pos, PacketClass(rid, 1, int(y)))
    return ExplicitState(
        net.queues, tuple(tuple(per_queue[q]) for q in net.queues)
    )


class Reachability(enum.Enum):
    IRREDUCIBLE = "Irreducible"
    REDUCIBLE = "Reducible"
    UNKNOWN = "Unknown"


def _enumerate_packet_states(net: Network, n: tuple[int, ...], cap: int):
    """All packet-level states with n_i looping packets per route, as tuples
    (per queue) of (route, stage) in queue order; None if more than cap."""
    tables = KernelTables(net, 1.0)
    per_route_assignments = []
    for i, rid in enumerate(net.route_ids):
        k_i = tables.route_len[i]
        per_route_assignments.append(
            list(itertools.combinations_with_replacement(range(1, k_i + 1), n[i]))
        )
    states: set = set()
    for combo in itertools.product(*per_route_assignments):
        by_queue: dict[int, list[tuple[int, int]]] = {}
        for i, stages in enumerate(combo):
            for s in stages:
                j = tables.route_orders[i][s - 1]
                by_queue.setdefault(j, []).append((i, s))
        pools = []
        for j in range(net.J):
            classes = by_queue.get(j, [])
            pools.append(sorted(set(itertools.permutations(classes))))
        for arrangement in itertools.product(*pools):
            states.add(tuple(arrangement))
            if len(states) > cap:
                return None
    return states


def _packet_transitions(net: Network, state, tables: KernelTables):
    """Positive-rate successors of a closed packet-level state."""
    out = []
    for j, queue in enumerate(state):
        m = len(queue)
        if m == 0:
            continue
        disc = net.discipline[net.queues[j]]
        grow = disc.gamma_row(m)
        for pos in range(m):
            if grow[pos] <= 0.0:
                continue
            route, stage = queue[pos]
            if stage < tables.route_len[route]:
                nstage = stage + 1
            else:
                nstage = 1
            dest = tables.route_orders[route][nstage - 1]
            removed = queue[:pos] + queue[pos + 1 :]
            base = list(state)
            base[j] = removed
            target = base[dest]
            drow = net.discipline[net.queues[dest]].delta_row(len(target) + 1)
            for ins in range(len(target) + 1):
                if drow[ins] <= 0.0:
                    continue
                nq = target[:ins] + ((route, nstage),) + target[ins:]
                succ = list(base)
                succ[dest] = nq
                out.append(tuple(succ))
    return out


def reachability_check(
    net: Network, n: Sequence[int], state_cap: int = 100_000
) -> Reachability:
    """Decide whether the closed packet-level chain on its full state space is
    one communicating class (BFS + strong connectivity via reverse edges)."""
    n = tuple(int(v) for v in n)
    states = _enumerate_packet_states(net, n, state_cap)
    if states is None:
        return Reachability.UNKNOWN
    if len(states) <= 1:
        return Reachability.IRREDUCIBLE
    tables = KernelTables(net, 1.0)
    succ: dict = {}
    pred: dict = {s: set() for s in states}
    for s in states:
        nexts = set(_packet_transitions(net, s, tables))
        succ[s] = nexts
        for t in nexts:
            pred[t].add(s)
    start = next(iter(sorted(states)))

    def sweep(edges):
        seen = {start}
        stack = [start]
        while stack:
            cur = stack.pop()
            for nxt in edges[cur]:
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        return seen

    forward = sweep(succ)
    backward = sweep(pred)
    if forward == states and backward == states:
        return Reachability.IRREDUCIBLE
    return Reachability.REDUCIBLE
