# cython: language_level=3, boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""Compiled packet-event kernel: the fast twin of ``_pykernel.PacketKernel``.

Must stay draw-for-draw identical to the pure lane: same uniforms consumed in
the same order from the same bit generator, same floating-point expression
shapes, so event logs agree bitwise across lanes.
"""

from cpython.pycapsule cimport PyCapsule_GetPointer, PyCapsule_IsValid
from libc.math cimport log1p
from libc.stdlib cimport free, malloc, realloc
from libc.string cimport memmove

from numpy.random cimport bitgen_t

import numpy as np

from .errors import KernelNotStochastic, SimultaneityDetected

cdef const char *CAPSULE_NAME = "BitGenerator"

REACHED = 0
DEPARTED = 1
BUDGET = 2
OPEN = 0
CLOSED = 1
EV_ARRIVAL = 0
EV_STAGE = 1
EV_WRAP = 2
EV_DEPART = 3

cdef int C_REACHED = 0
cdef int C_DEPARTED = 1
cdef int C_BUDGET = 2
cdef int C_CLOSED = 1

cdef struct Pkt:
    int route
    int stage
    long long resid


cdef class PacketKernel:
    IMPL = "compiled"

    cdef object tables
    cdef object _bitgen_obj
    cdef bitgen_t *rng
    cdef public int mode
    cdef public bint log_events
    cdef public bint track_occupancy
    cdef public double t
    cdef public long long events
    cdef public int last_route
    cdef public list log
    cdef dict _occupancy
    cdef double _occ_t
    cdef int J, NR
    cdef Pkt **qdata
    cdef int *qlen
    cdef int *qcap
    cdef long long *mji
    cdef long long *n_arr
    cdef long long *wraps
    cdef long long wraps_len
    cdef long long *wrap_base
    cdef double *wbuf
    cdef int[:] route_len, route_off, route_flat
    cdef int[:] phi_cap, phi_off, phi_tail, disc_code, gamma_depth, delta_depth
    cdef long long[:] gamma_off, delta_off
    cdef double[:] phi_flat, gamma_flat, delta_flat

    def __cinit__(self):
        self.qdata = NULL
        self.qlen = NULL
        self.qcap = NULL
        self.mji = NULL
        self.n_arr = NULL
        self.wraps = NULL
        self.wrap_base = NULL
        self.wbuf = NULL

    def __init__(self, tables, bitgen, mode=OPEN, log_events=False, track_occupancy=False):
        self.tables = tables
        self._bitgen_obj = bitgen
        capsule = bitgen.capsule
        if not PyCapsule_IsValid(capsule, CAPSULE_NAME):
            raise ValueError("expected a numpy BitGenerator")
        self.rng = <bitgen_t *> PyCapsule_GetPointer(capsule, CAPSULE_NAME)
        self.mode = mode
        self.log_events = log_events
        self.track_occupancy = track_occupancy
        self.J = tables.J
        self.NR = tables.I
        self.route_len = tables.route_len_arr
        self.route_off = tables.route_off_arr
        self.route_flat = tables.route_flat_arr
        self.phi_cap = tables.phi_cap_arr
        self.phi_off = tables.phi_off_arr
        self.phi_tail = tables.phi_tail_arr
        self.phi_flat = tables.phi_flat_arr
        self.disc_code = tables.disc_code_arr
        self.gamma_depth = tables.gamma_depth_arr
        self.gamma_off = tables.gamma_off_arr
        self.gamma_flat = (
            tables.gamma_flat_arr if tables.gamma_flat_arr.size else np.zeros(1)
        )
        self.delta_depth = tables.delta_depth_arr
        self.delta_off = tables.delta_off_arr
        self.delta_flat = (
            tables.delta_flat_arr if tables.delta_flat_arr.size else np.zeros(1)
        )
        self.t = 0.0
        self.events = 0
        self.last_route = -1
        self.log = []
        self._occupancy = {}
        self._occ_t = 0.0
        self.wraps_len = 0
        cdef int j
        self.qdata = <Pkt **> malloc(self.J * sizeof(Pkt *))
        self.qlen = <int *> malloc(self.J * sizeof(int))
        self.qcap = <int *> malloc(self.J * sizeof(int))
        self.mji = <long long *> malloc(self.J * self.NR * sizeof(long long))
        self.n_arr = <long long *> malloc(self.NR * sizeof(long long))
        self.wrap_base = <long long *> malloc(self.NR * sizeof(long long))
        self.wbuf = <double *> malloc(self.J * sizeof(double))
        if (self.qdata == NULL or self.qlen == NULL or self.qcap == NULL or
                self.mji == NULL or self.n_arr == NULL or
                self.wrap_base == NULL or self.wbuf == NULL):
            raise MemoryError()
        for j in range(self.J):
            self.qcap[j] = 8
            self.qdata[j] = <Pkt *> malloc(8 * sizeof(Pkt))
            if self.qdata[j] == NULL:
                raise MemoryError()
            self.qlen[j] = 0
            self.wbuf[j] = 0.0
        for j in range(self.J * self.NR):
            self.mji[j] = 0
        for j in range(self.NR):
            self.n_arr[j] = 0
            self.wrap_base[j] = 0

    def __dealloc__(self):
        cdef int j
        if self.qdata != NULL:
            for j in range(self.J):
                if self.qdata[j] != NULL:
                    free(self.qdata[j])
            free(self.qdata)
        if self.qlen != NULL:
            free(self.qlen)
        if self.qcap != NULL:
            free(self.qcap)
        if self.mji != NULL:
            free(self.mji)
        if self.n_arr != NULL:
            free(self.n_arr)
        if self.wraps != NULL:
            free(self.wraps)
        if self.wrap_base != NULL:
            free(self.wrap_base)
        if self.wbuf != NULL:
            free(self.wbuf)

    # -- queue storage -------------------------------------------------------

    cdef void _grow(self, int j) except *:
        cdef int ncap = self.qcap[j] * 2
        cdef Pkt *nd = <Pkt *> realloc(self.qdata[j], ncap * sizeof(Pkt))
        if nd == NULL:
            raise MemoryError()
        self.qdata[j] = nd
        self.qcap[j] = ncap

    cdef void _q_insert(self, int j, int pos, Pkt p) except *:
        if self.qlen[j] == self.qcap[j]:
            self._grow(j)
        cdef Pkt *q = self.qdata[j]
        cdef int size = self.qlen[j]
        if pos < size:
            memmove(q + pos + 1, q + pos, (size - pos) * sizeof(Pkt))
        q[pos] = p
        self.qlen[j] = size + 1

    cdef Pkt _q_pop(self, int j, int pos):
        cdef Pkt *q = self.qdata[j]
        cdef Pkt out = q[pos]
        cdef int size = self.qlen[j]
        if pos < size - 1:
            memmove(q + pos, q + pos + 1, (size - 1 - pos) * sizeof(Pkt))
        self.qlen[j] = size - 1
        return out

    # -- setup ----------------------------------------------------------------

    def load_state(self, per_queue):
        cdef int j, route, stage
        cdef long long resid, base
        cdef Pkt p
        for j, packets in enumerate(per_queue):
            for item in packets:
                route = item[0]
                stage = item[1]
                resid = item[2]
                p.route = route
                p.stage = stage
                p.resid = resid
                self._q_insert(j, self.qlen[j], p)
                self.mji[j * self.NR + route] += 1
                self.n_arr[route] += 1
        if self.mode == C_CLOSED:
            base = 0
            for j in range(self.NR):
                self.wrap_base[j] = base
                base += self.n_arr[j]
            self.wraps_len = base
            self.wraps = <long long *> malloc((base if base > 0 else 1) * sizeof(long long))
            if self.wraps == NULL:
                raise MemoryError()
            for j in range(<int> base):
                self.wraps[j] = 0

    # -- helpers ----------------------------------------------------------------

    cdef inline double _rand(self):
        return self.rng.next_double(self.rng.state)

    cdef inline double _phi(self, int j, int mj):
        cdef int base = self.phi_off[j]
        cdef int cap = self.phi_cap[j]
        if mj <= cap:
            return self.phi_flat[base + mj - 1]
        if self.phi_tail[j] == 0:
            return self.phi_flat[base + cap - 1]
        return self.phi_flat[base + cap - 1] * mj / cap

    cdef int _scan_gamma(self, int j, int m, double u) except -2:
        if m > self.gamma_depth[j]:
            raise KernelNotStochastic(f"discipline table has no row for m={m}")
        cdef long long start = self.gamma_off[j] + (<long long> m) * (m - 1) // 2
        cdef double acc = 0.0
        cdef int idx
        for idx in range(m):
            acc += self.gamma_flat[start + idx]
            if u < acc:
                return idx
        return m - 1

    cdef int _scan_delta(self, int j, int m, double u) except -2:
        if m > self.delta_depth[j]:
            raise KernelNotStochastic(f"discipline table has no row for m={m}")
        cdef long long start = self.delta_off[j] + (<long long> m) * (m - 1) // 2
        cdef double acc = 0.0
        cdef int idx
        for idx in range(m):
            acc += self.delta_flat[start + idx]
            if u < acc:
                return idx
        return m - 1

    cdef void _occ_add(self, double t_new):
        if t_new > self._occ_t:
            key = tuple([self.mji[x] for x in range(self.J * self.NR)])
            self._occupancy[key] = self._occupancy.get(key, 0.0) + (t_new - self._occ_t)
            self._occ_t = t_new

    # -- core loop ----------------------------------------------------------------

    def advance(self, double t_bound, long long event_limit):
        cdef double total, u, tn, target, acc, w
        cdef int busy, j, jj, mj, pos, code, route, stage, dest, md, ins, kind
        cdef Pkt pkt
        while True:
            total = 0.0
            busy = 0
            j = -1
            for jj in range(self.J):
                mj = self.qlen[jj]
                if mj > 0:
                    w = self._phi(jj, mj)
                    self.wbuf[jj] = w
                    total += w
                    busy += 1
                    j = jj
                else:
                    self.wbuf[jj] = 0.0
            if total <= 0.0:
                if self.track_occupancy:
                    self._occ_add(t_bound)
                self.t = t_bound
                return C_REACHED
            tn = self.t - log1p(-self._rand()) / total
            if tn >= t_bound:
                if self.track_occupancy:
                    self._occ_add(t_bound)
                self.t = t_bound
                return C_REACHED
            if self.events >= event_limit:
                return C_BUDGET
            if busy > 1:
                target = self._rand() * total
                acc = 0.0
                for jj in range(self.J):
                    w = self.wbuf[jj]
                    if w > 0.0:
                        acc += w
                        if target < acc:
                            j = jj
                            break
            mj = self.qlen[j]
            code = self.disc_code[j]
            if code == 0:  # processor sharing
                if mj == 1:
                    pos = 0
                else:
                    pos = <int> (self._rand() * mj)
                    if pos > mj - 1:
                        pos = mj - 1
            elif code == 1:  # fifo
                pos = 0
            elif code == 2:  # lifo-preemptive
                pos = mj - 1
            else:
                pos = self._scan_gamma(j, mj, self._rand())
            if tn <= self.t:
                raise SimultaneityDetected(f"event time did not increase at t={self.t!r}")
            if self.track_occupancy:
                self._occ_add(tn)
            pkt = self._q_pop(j, pos)
            route = pkt.route
            self.mji[j * self.NR + route] -= 1
            stage = pkt.stage
            if stage < self.route_len[route]:
                pkt.stage = stage + 1
                dest = self.route_flat[self.route_off[route] + stage]
                kind = EV_STAGE
            elif self.mode == C_CLOSED:
                pkt.stage = 1
                dest = self.route_flat[self.route_off[route]]
                kind = EV_WRAP
                self.wraps[self.wrap_base[route] + pkt.resid] += 1
            elif pkt.resid > 1:
                pkt.resid -= 1
                pkt.stage = 1
                dest = self.route_flat[self.route_off[route]]
                kind = EV_WRAP
            else:
                self.t = tn
                self.events += 1
                self.n_arr[route] -= 1
                self.last_route = route
                if self.log_events:
                    self.log.append((tn, EV_DEPART, route, j, -1, 0, pos + 1, mj))
                return C_DEPARTED
            md = self.qlen[dest] + 1
            code = self.disc_code[dest]
            if code == 0:
                if md == 1:
                    ins = 0
                else:
                    ins = <int> (self._rand() * md)
                    if ins > md - 1:
                        ins = md - 1
            elif code == 1 or code == 2:
                ins = md - 1
            else:
                ins = self._scan_delta(dest, md, self._rand())
            self._q_insert(dest, ins, pkt)
            self.mji[dest * self.NR + route] += 1
            self.t = tn
            self.events += 1
            if self.log_events:
                self.log.append((tn, kind, route, j, dest, pkt.resid, pos + 1, mj))

    def insert_packet(self, int route, long long resid):
        cdef int dest = self.route_flat[self.route_off[route]]
        cdef int md = self.qlen[dest] + 1
        cdef int code = self.disc_code[dest]
        cdef int ins
        cdef Pkt p
        if code == 0:
            if md == 1:
                ins = 0
            else:
                ins = <int> (self._rand() * md)
                if ins > md - 1:
                    ins = md - 1
        elif code == 1 or code == 2:
            ins = md - 1
        else:
            ins = self._scan_delta(dest, md, self._rand())
        p.route = route
        p.stage = 1
        p.resid = resid
        self._q_insert(dest, ins, p)
        self.mji[dest * self.NR + route] += 1
        self.n_arr[route] += 1
        self.events += 1
        if self.log_events:
            self.log.append((self.t, EV_ARRIVAL, route, -1, dest, resid, ins + 1, md))

    # -- accessors ----------------------------------------------------------------

    def counts(self):
        return tuple([self.n_arr[i] for i in range(self.NR)])

    def queue_sizes(self):
        return tuple([self.qlen[j] for j in range(self.J)])

    def state_dump(self):
        out = []
        cdef int j, k
        for j in range(self.J):
            row = []
            for k in range(self.qlen[j]):
                row.append(
                    (self.qdata[j][k].route, self.qdata[j][k].stage, self.qdata[j][k].resid)
                )
            out.append(row)
        return out

    def residuals_by_route(self):
        out = [[] for _ in range(self.NR)]
        cdef int j, k
        for j in range(self.J):
            for k in range(self.qlen[j]):
                out[self.qdata[j][k].route].append(self.qdata[j][k].resid)
        return out

    def wrap_snapshot(self):
        return [self.wraps[k] for k in range(self.wraps_len)]

    def occupancy_dict(self):
        return dict(self._occupancy)
