"""Log-domain path metrics and per-path SC workspaces with copy-on-fork.

Every metric is the natural log of the a posteriori probability of a decided
prefix.  Channel inputs are turned into per-symbol log posteriors, so the
odd/even recursions produce exact prefix posteriors without any unknown
normalising constant.  The check-node step is a logsumexp of two products,
the variable-node step a plain sum.

A workspace pool holds, for every layer ``lam`` (1..n) and path, one slot of
``N >> lam`` metric pairs and, for every layer 0..n, one slot of partial-sum
bit pairs.  Paths reference slots by index; forking a path copies ``2n + 1``
slot handles and bumps reference counts.  A shared slot is detached only
when one of its owners writes to it.
"""
from collections import namedtuple

import numpy as np
from numba import njit

NEG_FLOOR = -1.0e6

REC, COPY, SORT, PRUNED = 0, 1, 2, 3
COUNTER_NAMES = ("metric_recursions", "path_copies", "sort_operations", "pruned_paths")

Workspace = namedtuple("Workspace", [
    "n", "L", "chan", "P", "p_off", "C", "c_off",
    "p_slot", "p_ref", "p_free", "p_nfree",
    "c_slot", "c_ref", "c_free", "c_nfree",
    "active", "path_free", "path_nfree", "metric", "pid", "next_pid", "phase", "counters",
])


def new_workspace(n, L):
    N = 1 << n
    p_off = np.zeros(n + 2, dtype=np.int64)
    for lam in range(1, n + 1):
        p_off[lam + 1] = p_off[lam] + L * (N >> lam) * 2
    c_off = np.zeros(n + 2, dtype=np.int64)
    for lam in range(0, n + 1):
        c_off[lam + 1] = c_off[lam] + L * (N >> lam) * 2
    return Workspace(
        n, L,
        np.zeros((N, 2)),
        np.zeros(max(p_off[n + 1], 1)), p_off,
        np.zeros(c_off[n + 1], dtype=np.uint8), c_off,
        np.zeros((n + 1, L), dtype=np.int32), np.zeros((n + 1, L), dtype=np.int32),
        np.zeros((n + 1, L), dtype=np.int32), np.zeros(n + 1, dtype=np.int32),
        np.zeros((n + 1, L), dtype=np.int32), np.zeros((n + 1, L), dtype=np.int32),
        np.zeros((n + 1, L), dtype=np.int32), np.zeros(n + 1, dtype=np.int32),
        np.zeros(L, dtype=np.bool_), np.zeros(L, dtype=np.int32), np.zeros(1, dtype=np.int32),
        np.zeros(L), np.zeros(L, dtype=np.int64), np.zeros(1, dtype=np.int64),
        np.zeros(L, dtype=np.int64), np.zeros(4, dtype=np.int64),
    )


@njit(cache=True, inline="always")
def lse2(a, b):
    if a >= b:
        return a + np.log1p(np.exp(b - a))
    return b + np.log1p(np.exp(a - b))


@njit(cache=True)
def load_channel(ws, llr):
    """Per-symbol log posteriors log Pr(x=0|y), log Pr(x=1|y) from LLRs."""
    for k in range(llr.shape[0]):
        v = llr[k]
        if v >= 0:
            t = np.log1p(np.exp(-v))
            ws.chan[k, 0] = -t
            ws.chan[k, 1] = -v - t
        else:
            t = np.log1p(np.exp(v))
            ws.chan[k, 0] = v - t
            ws.chan[k, 1] = -t


@njit(cache=True)
def reset(ws):
    """Empty the pool and start a single root path (index 0) with metric 0."""
    n, L = ws.n, ws.L
    for lam in range(n + 1):
        for s in range(L):
            ws.p_free[lam, s] = L - 1 - s
            ws.c_free[lam, s] = L - 1 - s
            ws.p_ref[lam, s] = 0
            ws.c_ref[lam, s] = 0
        ws.p_nfree[lam] = L
        ws.c_nfree[lam] = L
    for l in range(L):
        ws.active[l] = False
        ws.path_free[l] = L - 1 - l
    ws.path_nfree[0] = L
    ws.counters[:] = 0
    ws.next_pid[0] = 0
    root = _take_path(ws)
    for lam in range(n + 1):
        ws.p_nfree[lam] -= 1
        s = ws.p_free[lam, ws.p_nfree[lam]]
        ws.p_slot[lam, root] = s
        ws.p_ref[lam, s] = 1
        ws.c_nfree[lam] -= 1
        s = ws.c_free[lam, ws.c_nfree[lam]]
        ws.c_slot[lam, root] = s
        ws.c_ref[lam, s] = 1
    ws.metric[root] = 0.0
    return root


@njit(cache=True, inline="always")
def _take_path_arr(active, path_free, path_nfree, pid, next_pid, phase):
    path_nfree[0] -= 1
    l = path_free[path_nfree[0]]
    active[l] = True
    pid[l] = next_pid[0]
    next_pid[0] += 1
    phase[l] = 0
    return l


@njit(cache=True)
def _take_path(ws):
    return _take_path_arr(ws.active, ws.path_free, ws.path_nfree, ws.pid, ws.next_pid,
                          ws.phase)


@njit(cache=True, inline="always")
def _writable_p(p_slot, p_ref, p_free, p_nfree, lam, l):
    s = p_slot[lam, l]
    if p_ref[lam, s] == 1:
        return s
    p_ref[lam, s] -= 1
    p_nfree[lam] -= 1
    t = p_free[lam, p_nfree[lam]]
    p_ref[lam, t] = 1
    p_slot[lam, l] = t
    # the whole layer is recomputed before it is read, no content copy
    return t


@njit(cache=True, inline="always")
def _writable_c(n, C, c_off, c_slot, c_ref, c_free, c_nfree, lam, l):
    s = c_slot[lam, l]
    if c_ref[lam, s] == 1:
        return s
    c_ref[lam, s] -= 1
    c_nfree[lam] -= 1
    t = c_free[lam, c_nfree[lam]]
    c_ref[lam, t] = 1
    c_slot[lam, l] = t
    size = ((1 << n) >> lam) * 2
    src = c_off[lam] + s * size
    dst = c_off[lam] + t * size
    C[dst:dst + size] = C[src:src + size]
    return t


@njit(cache=True, inline="always")
def fork_path_arr(n, p_slot, p_ref, c_slot, c_ref, active, path_free, path_nfree, pid,
                  next_pid, phase, metric, counters, l):
    c = _take_path_arr(active, path_free, path_nfree, pid, next_pid, phase)
    for lam in range(n + 1):
        s = p_slot[lam, l]
        p_slot[lam, c] = s
        p_ref[lam, s] += 1
        s = c_slot[lam, l]
        c_slot[lam, c] = s
        c_ref[lam, s] += 1
    metric[c] = metric[l]
    phase[c] = phase[l]
    counters[COPY] += 1
    return c


@njit(cache=True)
def fork_path(ws, l):
    """Clone path ``l`` by sharing all of its slots; returns the new path index."""
    return fork_path_arr(ws.n, ws.p_slot, ws.p_ref, ws.c_slot, ws.c_ref, ws.active,
                         ws.path_free, ws.path_nfree, ws.pid, ws.next_pid, ws.phase,
                         ws.metric, ws.counters, l)


@njit(cache=True, inline="always")
def kill_path_arr(n, p_slot, p_ref, p_free, p_nfree, c_slot, c_ref, c_free, c_nfree,
                  active, path_free, path_nfree, l):
    active[l] = False
    path_free[path_nfree[0]] = l
    path_nfree[0] += 1
    for lam in range(n + 1):
        s = p_slot[lam, l]
        p_ref[lam, s] -= 1
        if p_ref[lam, s] == 0:
            p_free[lam, p_nfree[lam]] = s
            p_nfree[lam] += 1
        s = c_slot[lam, l]
        c_ref[lam, s] -= 1
        if c_ref[lam, s] == 0:
            c_free[lam, c_nfree[lam]] = s
            c_nfree[lam] += 1


@njit(cache=True)
def kill_path(ws, l):
    kill_path_arr(ws.n, ws.p_slot, ws.p_ref, ws.p_free, ws.p_nfree, ws.c_slot, ws.c_ref,
                  ws.c_free, ws.c_nfree, ws.active, ws.path_free, ws.path_nfree, l)


@njit(cache=True, inline="always")
def _compute_layer(n, chan, P, p_off, p_slot, p_ref, p_free, p_nfree, C, c_off, c_slot,
                   counters, l, lam, ph):
    s = (1 << n) >> lam
    dst = p_off[lam] + _writable_p(p_slot, p_ref, p_free, p_nfree, lam, l) * s * 2
    use_chan = lam == 1
    src = 0
    if not use_chan:
        src = p_off[lam - 1] + p_slot[lam - 1, l] * (2 * s) * 2
    odd = ph & 1
    cb = c_off[lam] + c_slot[lam, l] * s * 2
    for b in range(s):
        if use_chan:
            a0 = chan[2 * b, 0]
            a1 = chan[2 * b, 1]
            b0 = chan[2 * b + 1, 0]
            b1 = chan[2 * b + 1, 1]
        else:
            a0 = P[src + 4 * b]
            a1 = P[src + 4 * b + 1]
            b0 = P[src + 4 * b + 2]
            b1 = P[src + 4 * b + 3]
        if odd == 0:
            P[dst + 2 * b] = lse2(a0 + b0, a1 + b1)
            P[dst + 2 * b + 1] = lse2(a1 + b0, a0 + b1)
        elif C[cb + 2 * b] == 0:
            P[dst + 2 * b] = a0 + b0
            P[dst + 2 * b + 1] = a1 + b1
        else:
            P[dst + 2 * b] = a1 + b0
            P[dst + 2 * b + 1] = a0 + b1
    counters[REC] += s


@njit(cache=True, inline="always")
def calc_metrics_arr(n, chan, P, p_off, p_slot, p_ref, p_free, p_nfree, C, c_off, c_slot,
                     counters, l, phi):
    lam = n
    ph = phi
    while lam > 1 and ph & 1 == 0:
        lam -= 1
        ph >>= 1
    while 1 <= lam <= n:
        _compute_layer(n, chan, P, p_off, p_slot, p_ref, p_free, p_nfree, C, c_off, c_slot,
                       counters, l, lam, phi >> (n - lam))
        lam += 1
    if n == 0:
        return chan[0, 0], chan[0, 1]
    top = p_off[n] + p_slot[n, l] * 2
    return P[top], P[top + 1]


@njit(cache=True)
def calc_metrics(ws, l, phi):
    """Refresh the layers stale at bit ``phi`` and return the two child metrics."""
    return calc_metrics_arr(ws.n, ws.chan, ws.P, ws.p_off, ws.p_slot, ws.p_ref, ws.p_free,
                            ws.p_nfree, ws.C, ws.c_off, ws.c_slot, ws.counters, l, phi)


@njit(cache=True, inline="always")
def set_decision_arr(n, C, c_off, c_slot, c_ref, c_free, c_nfree, phase, l, phi, bit):
    s = _writable_c(n, C, c_off, c_slot, c_ref, c_free, c_nfree, n, l)
    C[c_off[n] + s * 2 + (phi & 1)] = bit
    phase[l] = phi + 1


@njit(cache=True)
def set_decision(ws, l, phi, bit):
    set_decision_arr(ws.n, ws.C, ws.c_off, ws.c_slot, ws.c_ref, ws.c_free, ws.c_nfree,
                     ws.phase, l, phi, bit)


@njit(cache=True, inline="always")
def update_partial_sums_arr(n, C, c_off, c_slot, c_ref, c_free, c_nfree, l, phi):
    if phi & 1 == 0:
        return
    N = 1 << n
    lam = n
    ph = phi
    while lam >= 1:
        psi = ph >> 1
        s = N >> lam
        src = c_off[lam] + c_slot[lam, l] * s * 2
        dst = c_off[lam - 1] + _writable_c(n, C, c_off, c_slot, c_ref, c_free, c_nfree,
                                           lam - 1, l) * (2 * s) * 2
        col = psi & 1
        for b in range(s):
            u0 = C[src + 2 * b]
            u1 = C[src + 2 * b + 1]
            C[dst + 4 * b + col] = u0 ^ u1
            C[dst + 4 * b + 2 + col] = u1
        if psi & 1 == 0:
            break
        lam -= 1
        ph = psi


@njit(cache=True)
def update_partial_sums(ws, l, phi):
    """Propagate the decided pair ending at odd bit ``phi`` down the layers."""
    update_partial_sums_arr(ws.n, ws.C, ws.c_off, ws.c_slot, ws.c_ref, ws.c_free, ws.c_nfree,
                            l, phi)


# Batched per-bit passes over all active paths.  Each is a separate compiled
# function so the list kernel hands arrays over once per bit instead of once
# per path, which keeps reference counting out of the inner loops.

@njit(cache=True)
def extend_active(n, chan, P, p_off, p_slot, p_ref, p_free, p_nfree, C, c_off, c_slot,
                  counters, active, phi, m0, m1):
    # same work as calc_metrics_arr per path, written out flat
    top = n
    ph = phi
    while top > 1 and ph & 1 == 0:
        top -= 1
        ph >>= 1
    rec = 0
    for l in range(active.shape[0]):
        if not active[l]:
            continue
        if n == 0:
            m0[l] = chan[0, 0]
            m1[l] = chan[0, 1]
            continue
        for lam in range(top, n + 1):
            s = (1 << n) >> lam
            t = p_slot[lam, l]
            if p_ref[lam, t] != 1:
                p_ref[lam, t] -= 1
                p_nfree[lam] -= 1
                t = p_free[lam, p_nfree[lam]]
                p_ref[lam, t] = 1
                p_slot[lam, l] = t
            dst = p_off[lam] + t * s * 2
            odd = (phi >> (n - lam)) & 1
            cb = c_off[lam] + c_slot[lam, l] * s * 2
            if lam == 1:
                for b in range(s):
                    a0 = chan[2 * b, 0]
                    a1 = chan[2 * b, 1]
                    b0 = chan[2 * b + 1, 0]
                    b1 = chan[2 * b + 1, 1]
                    if odd == 0:
                        P[dst + 2 * b] = lse2(a0 + b0, a1 + b1)
                        P[dst + 2 * b + 1] = lse2(a1 + b0, a0 + b1)
                    elif C[cb + 2 * b] == 0:
                        P[dst + 2 * b] = a0 + b0
                        P[dst + 2 * b + 1] = a1 + b1
                    else:
                        P[dst + 2 * b] = a1 + b0
                        P[dst + 2 * b + 1] = a0 + b1
            else:
                src = p_off[lam - 1] + p_slot[lam - 1, l] * (2 * s) * 2
                for b in range(s):
                    a0 = P[src + 4 * b]
                    a1 = P[src + 4 * b + 1]
                    b0 = P[src + 4 * b + 2]
                    b1 = P[src + 4 * b + 3]
                    if odd == 0:
                        P[dst + 2 * b] = lse2(a0 + b0, a1 + b1)
                        P[dst + 2 * b + 1] = lse2(a1 + b0, a0 + b1)
                    elif C[cb + 2 * b] == 0:
                        P[dst + 2 * b] = a0 + b0
                        P[dst + 2 * b + 1] = a1 + b1
                    else:
                        P[dst + 2 * b] = a1 + b0
                        P[dst + 2 * b + 1] = a0 + b1
            rec += s
        q = p_off[n] + p_slot[n, l] * 2
        m0[l] = P[q]
        m1[l] = P[q + 1]
    counters[REC] += rec


@njit(cache=True)
def decide_active(n, C, c_off, c_slot, c_ref, c_free, c_nfree, phase, active, bits, phi):
    # set_decision_arr then update_partial_sums_arr per path, written out flat
    N = 1 << n
    for l in range(active.shape[0]):
        if not active[l]:
            continue
        lam = n
        while True:
            s = c_slot[lam, l]
            if c_ref[lam, s] != 1:
                c_ref[lam, s] -= 1
                c_nfree[lam] -= 1
                t = c_free[lam, c_nfree[lam]]
                c_ref[lam, t] = 1
                c_slot[lam, l] = t
                size = (N >> lam) * 2
                src = c_off[lam] + s * size
                dst = c_off[lam] + t * size
                for q in range(size):
                    C[dst + q] = C[src + q]
            if lam == n:
                C[c_off[n] + c_slot[n, l] * 2 + (phi & 1)] = bits[l]
                phase[l] = phi + 1
                if phi & 1 == 0:
                    break
                ph = phi
            else:
                # fold layer lam + 1 into layer lam
                psi = ph >> 1
                sz = N >> (lam + 1)
                src = c_off[lam + 1] + c_slot[lam + 1, l] * sz * 2
                dst = c_off[lam] + c_slot[lam, l] * (2 * sz) * 2
                col = psi & 1
                for b in range(sz):
                    u0 = C[src + 2 * b]
                    u1 = C[src + 2 * b + 1]
                    C[dst + 4 * b + col] = u0 ^ u1
                    C[dst + 4 * b + 2 + col] = u1
                if psi & 1 == 0:
                    break
                ph = psi
            lam -= 1
            if lam < 0:
                break


@njit(cache=True)
def kill_paths(n, p_slot, p_ref, p_free, p_nfree, c_slot, c_ref, c_free, c_nfree,
               active, path_free, path_nfree, ids, lo, hi):
    for j in range(lo, hi):
        kill_path_arr(n, p_slot, p_ref, p_free, p_nfree, c_slot, c_ref, c_free, c_nfree,
                      active, path_free, path_nfree, ids[j])


@njit(cache=True)
def fork_paths(n, p_slot, p_ref, c_slot, c_ref, active, path_free, path_nfree, pid, next_pid,
               phase, metric, counters, ids, count, out):
    for j in range(count):
        out[j] = fork_path_arr(n, p_slot, p_ref, c_slot, c_ref, active, path_free, path_nfree,
                               pid, next_pid, phase, metric, counters, ids[j])


@njit(cache=True)
def read_codeword(ws, l, out):
    """Stage-0 partial sums of path ``l``: the re-encoded decided word."""
    N = 1 << ws.n
    base = ws.c_off[0] + ws.c_slot[0, l] * N * 2
    for b in range(N):
        out[b] = ws.C[base + 2 * b]


def normalize_level(metrics):
    """Shift log metrics so that the largest is 0; returns (shifted, offset).

    Ratios exp(m_j) / sum_k exp(m_k) are unchanged by the shift.
    """
    m = np.asarray(metrics, dtype=np.float64)
    if m.size == 0 or not np.any(m > NEG_FLOOR):
        raise FloatingPointError("no finite metric to normalise")
    off = float(m.max())
    return m - off, off


class PathWorkspaces:
    """Python-facing handle on a workspace pool for step-by-step use.

    Mainly for inspection and testing.  It goes through the per-path routines,
    while the list kernel uses the batched passes over the same pool.
    """

    def __init__(self, n, L):
        self.ws = new_workspace(n, L)
        self.n = n
        self.N = 1 << n

    def load(self, llr):
        llr = np.asarray(llr, dtype=np.float64)
        if llr.shape != (self.N,):
            raise ValueError(f"expected {self.N} LLRs")
        load_channel(self.ws, llr)
        return int(reset(self.ws))

    def extend_path_metrics(self, path, level, frozen_value=None):
        """Child metrics (bit 0, bit 1) for 0-based bit index ``level``.

        At a frozen index the mismatching child gets the NEG_FLOOR metric.
        """
        if not self.ws.active[path]:
            raise RuntimeError("path is not active")
        if level != self.ws.phase[path]:
            raise RuntimeError(f"path is at bit {self.ws.phase[path]}, asked for {level}")
        m = list(calc_metrics(self.ws, path, level))
        if frozen_value is not None:
            m[1 - frozen_value] = NEG_FLOOR
        return m[0], m[1]

    def decide(self, path, level, bit):
        set_decision(self.ws, path, level, bit)
        ws = self.ws
        if self.n == 0:
            ws.metric[path] = ws.chan[0, bit]
        else:
            ws.metric[path] = ws.P[ws.p_off[self.n] + ws.p_slot[self.n, path] * 2 + bit]
        update_partial_sums(self.ws, path, level)

    def fork(self, path):
        return int(fork_path(self.ws, path))

    def kill(self, path):
        kill_path(self.ws, path)

    def metric(self, path):
        return float(self.ws.metric[path])

    def codeword(self, path):
        out = np.zeros(self.N, dtype=np.uint8)
        read_codeword(self.ws, path, out)
        return out

    def counters(self):
        return dict(zip(COUNTER_NAMES, map(int, self.ws.counters)))
