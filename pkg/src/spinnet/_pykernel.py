"""Pure-Python packet-event kernel: the fallback twin of the compiled kernel.

Both lanes implement exactly the same event loop and draw uniforms from the
same bit generator in the same order, so runs are bit-identical across lanes.
Consumption rules per service event: one uniform for the exponential race;
one for the queue choice unless a single queue is busy; one for the served
position unless the discipline forces it (fifo head, lifo top, ps with one
packet); one for the insertion slot under the same rule at the destination.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import EventBudgetExceeded, KernelNotStochastic, SimultaneityDetected

# advance() return codes
REACHED = 0
DEPARTED = 1
BUDGET = 2

# modes
OPEN = 0
CLOSED = 1

# event kinds
EV_ARRIVAL = 0
EV_STAGE = 1
EV_WRAP = 2
EV_DEPART = 3

# discipline codes
PS = 0
FIFO = 1
LIFO = 2
CUSTOM = 3

# phi tail codes
TAIL_CONST = 0
TAIL_PROP = 1

KERNEL_IMPL = "pure-python"


class PacketKernel:
    IMPL = "pure-python"

    def __init__(self, tables, bitgen, mode=OPEN, log_events=False, track_occupancy=False):
        self.tables = tables
        self._gen = np.random.Generator(bitgen)
        self.mode = mode
        self.log_events = log_events
        self.track_occupancy = track_occupancy
        J, I = tables.J, tables.I
        self.queues: list[list[list[int]]] = [[] for _ in range(J)]
        self.m = [0] * J
        self.mji = [0] * (J * I)
        self.n = [0] * I
        self.t = 0.0
        self.events = 0
        self.log: list[tuple] = []
        self.wrap_counts: list[int] = []
        self._wrap_base = [0] * I
        self._wbuf = [0.0] * J
        self.occupancy: dict[tuple, float] = {}
        self._occ_t = 0.0
        self.last_route = -1

    # -- setup ---------------------------------------------------------------

    def load_state(self, per_queue):
        """per_queue: per queue slot, a list of (route, stage, resid) with
        position 0 the head. In closed mode resid is the packet index on its
        route (0-based) and wrap counters are allocated per packet."""
        tb = self.tables
        for j, packets in enumerate(per_queue):
            for route, stage, resid in packets:
                self.queues[j].append([route, stage, resid])
                self.m[j] += 1
                self.mji[j * tb.I + route] += 1
                self.n[route] += 1
        if self.mode == CLOSED:
            base = 0
            for i in range(tb.I):
                self._wrap_base[i] = base
                base += self.n[i]
            self.wrap_counts = [0] * base

    # -- rate helpers ---------------------------------------------------------

    def _phi(self, j, m):
        tb = self.tables
        cap = tb.phi_cap[j]
        if m <= cap:
            return tb.phi_values[j][m - 1]
        if tb.phi_tail[j] == TAIL_CONST:
            return tb.phi_values[j][cap - 1]
        return tb.phi_values[j][cap - 1] * m / cap

    def _scan_row(self, row, m, u):
        if m > len(row):
            raise KernelNotStochastic(f"discipline table has no row for m={m}")
        acc = 0.0
        probs = row[m - 1]
        for idx in range(m):
            acc += probs[idx]
            if u < acc:
                return idx
        return m - 1

    def _occ_add(self, t_new):
        if t_new > self._occ_t:
            key = tuple(self.mji)
            self.occupancy[key] = self.occupancy.get(key, 0.0) + (t_new - self._occ_t)
            self._occ_t = t_new

    # -- core loop -------------------------------------------------------------

    def advance(self, t_bound, event_limit):
        """Run service completions until t_bound, a departure, or the event
        budget; returns a status code with self.t updated."""
        tb = self.tables
        rand = self._gen.random
        queues = self.queues
        m = self.m
        wbuf = self._wbuf
        J = tb.J
        while True:
            total = 0.0
            busy = 0
            j = -1
            for jj in range(J):
                mj = m[jj]
                if mj > 0:
                    w = self._phi(jj, mj)
                    wbuf[jj] = w
                    total += w
                    busy += 1
                    j = jj
                else:
                    wbuf[jj] = 0.0
            if total <= 0.0:
                if self.track_occupancy:
                    self._occ_add(t_bound)
                self.t = t_bound
                return REACHED
            tn = self.t - math.log1p(-rand()) / total
            if tn >= t_bound:
                if self.track_occupancy:
                    self._occ_add(t_bound)
                self.t = t_bound
                return REACHED
            if self.events >= event_limit:
                return BUDGET
            if busy > 1:
                target = rand() * total
                acc = 0.0
                for jj in range(J):
                    w = wbuf[jj]
                    if w > 0.0:
                        acc += w
                        if target < acc:
                            j = jj
                            break
            mj = m[j]
            code = tb.disc_code[j]
            if code == PS:
                pos = 0 if mj == 1 else min(int(rand() * mj), mj - 1)
            elif code == FIFO:
                pos = 0
            elif code == LIFO:
                pos = mj - 1
            else:
                pos = self._scan_row(tb.gamma_rows[j], mj, rand())
            if tn <= self.t:
                raise SimultaneityDetected(f"event time did not increase at t={self.t!r}")
            if self.track_occupancy:
                self._occ_add(tn)
            pkt = queues[j].pop(pos)
            m[j] -= 1
            route = pkt[0]
            self.mji[j * tb.I + route] -= 1
            stage = pkt[1]
            if stage < tb.route_len[route]:
                pkt[1] = stage + 1
                dest = tb.route_orders[route][stage]
                kind = EV_STAGE
            elif self.mode == CLOSED:
                pkt[1] = 1
                dest = tb.route_orders[route][0]
                kind = EV_WRAP
                self.wrap_counts[self._wrap_base[route] + pkt[2]] += 1
            elif pkt[2] > 1:
                pkt[2] -= 1
                pkt[1] = 1
                dest = tb.route_orders[route][0]
                kind = EV_WRAP
            else:
                self.t = tn
                self.events += 1
                self.n[route] -= 1
                self.last_route = route
                if self.log_events:
                    self.log.append((tn, EV_DEPART, route, j, -1, 0, pos + 1, mj))
                return DEPARTED
            md = m[dest] + 1
            dcode = tb.disc_code[dest]
            if dcode == PS:
                ins = 0 if md == 1 else min(int(rand() * md), md - 1)
            elif dcode == FIFO or dcode == LIFO:
                ins = md - 1
            else:
                ins = self._scan_row(tb.delta_rows[dest], md, rand())
            queues[dest].insert(ins, pkt)
            m[dest] += 1
            self.mji[dest * tb.I + route] += 1
            self.t = tn
            self.events += 1
            if self.log_events:
                self.log.append((tn, kind, route, j, dest, pkt[2], pos + 1, mj))

    def insert_packet(self, route, resid):
        """External arrival: a fresh packet at stage 1 of the route's first
        queue, inserted at a delta-sampled position, at the current time."""
        tb = self.tables
        dest = tb.route_orders[route][0]
        md = self.m[dest] + 1
        dcode = tb.disc_code[dest]
        if dcode == PS:
            ins = 0 if md == 1 else min(int(self._gen.random() * md), md - 1)
        elif dcode == FIFO or dcode == LIFO:
            ins = md - 1
        else:
            ins = self._scan_row(tb.delta_rows[dest], md, self._gen.random())
        self.queues[dest].insert(ins, [route, 1, resid])
        self.m[dest] += 1
        self.mji[dest * tb.I + route] += 1
        self.n[route] += 1
        self.events += 1
        if self.log_events:
            self.log.append((self.t, EV_ARRIVAL, route, -1, dest, resid, ins + 1, md))

    # -- accessors ---------------------------------------------------------------

    def counts(self):
        return tuple(self.n)

    def queue_sizes(self):
        return tuple(self.m)

    def state_dump(self):
        return [[tuple(pkt) for pkt in q] for q in self.queues]

    def residuals_by_route(self):
        out = [[] for _ in range(self.tables.I)]
        for q in self.queues:
            for route, _stage, resid in q:
                out[route].append(resid)
        return out

    def wrap_snapshot(self):
        return list(self.wrap_counts)

    def occupancy_dict(self):
        return dict(self.occupancy)
