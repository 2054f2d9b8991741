"""SC, SCL and CRC-aided SCL decoding with a pruning hook after each sort.

The list loop for bit ``phi`` is

1. extend every path (both children at information bits, the frozen child
   at frozen bits),
2. at information bits, sort the children by metric and keep at most L,
3. run the pruning hook on the sorted survivors (never dropping the best),
4. fork parents whose two children both survived,
5. update partial sums.

After the last bit the surviving paths go to :func:`select_final`.
"""
import enum
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from . import metrics as me
from ._sort import stable_argsort
from .codec import _crc_ok, encode_inplace
from .errors import ConfigurationError
from .pruning import (KIND_BASELINE, KIND_DYNAMIC, KIND_OFF, KIND_STATIC, Off,
                      baseline_keep, dynamic_step, log_sum, static_keep)


class Status(str, enum.Enum):
    SUCCESS_CRC = "Success-CRC"
    SUCCESS_MAX_METRIC = "Success-MaxMetric"
    CRC_FAIL_ALL_PATHS = "CRCFailAllPaths"
    LIST_EMPTIED = "ListEmptied"


@dataclass
class ComplexityCounters:
    metric_recursions: int = 0
    path_copies: int = 0
    sort_operations: int = 0
    pruned_paths: int = 0

    @classmethod
    def from_array(cls, arr):
        return cls(*(int(v) for v in arr))

    def as_tuple(self):
        return (self.metric_recursions, self.path_copies, self.sort_operations, self.pruned_paths)


@dataclass
class DecodeOutcome:
    u_hat: np.ndarray
    info_bits: np.ndarray
    payload: np.ndarray
    status: Status
    counters: ComplexityCounters
    metric: float
    pde: float = 0.0
    pde_peak: float = 0.0
    genie_log_ratio: np.ndarray | None = None
    trace: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# plain SC: one path, its own arrays

@njit(cache=True)
def _sc_kernel(llr, frozen_mask, frozen_vals):
    N = llr.shape[0]
    n = 0
    while (1 << n) < N:
        n += 1
    # layer lam occupies P[off[lam]: off[lam] + 2 * (N >> lam)]
    off = np.zeros(n + 2, dtype=np.int64)
    for lam in range(n + 1):
        off[lam + 1] = off[lam] + 2 * (N >> lam)
    P = np.empty(off[n + 1])
    C = np.zeros(off[n + 1], dtype=np.uint8)
    for k in range(N):
        v = llr[k]
        P[2 * k] = -np.logaddexp(0.0, -v)
        P[2 * k + 1] = -np.logaddexp(0.0, v)
    u = np.zeros(N, dtype=np.uint8)
    rec = 0
    metric = 0.0
    for phi in range(N):
        lo = n
        ph = phi
        while lo > 1 and ph % 2 == 0:
            lo -= 1
            ph //= 2
        # with n = 0 the channel layer already holds the metrics
        for lam in range(max(lo, 1), n + 1):
            p = phi >> (n - lam)
            s = N >> lam
            d = off[lam]
            a = off[lam - 1]
            for b in range(s):
                l0 = P[a + 4 * b]
                l1 = P[a + 4 * b + 1]
                r0 = P[a + 4 * b + 2]
                r1 = P[a + 4 * b + 3]
                if p % 2 == 0:
                    P[d + 2 * b] = np.logaddexp(l0 + r0, l1 + r1)
                    P[d + 2 * b + 1] = np.logaddexp(l1 + r0, l0 + r1)
                elif C[d + 2 * b] == 0:
                    P[d + 2 * b] = l0 + r0
                    P[d + 2 * b + 1] = l1 + r1
                else:
                    P[d + 2 * b] = l1 + r0
                    P[d + 2 * b + 1] = l0 + r1
            rec += s
        m0 = P[off[n]]
        m1 = P[off[n] + 1]
        if frozen_mask[phi]:
            bit = frozen_vals[phi]
        else:
            bit = 0 if m0 >= m1 else 1
        u[phi] = bit
        metric = m0 if bit == 0 else m1
        C[off[n] + phi % 2] = bit
        if phi % 2 == 1:
            lam = n
            ph = phi
            while lam >= 1:
                psi = ph // 2
                s = N >> lam
                col = psi % 2
                for b in range(s):
                    x0 = C[off[lam] + 2 * b]
                    x1 = C[off[lam] + 2 * b + 1]
                    C[off[lam - 1] + 4 * b + col] = x0 ^ x1
                    C[off[lam - 1] + 4 * b + 2 + col] = x1
                if psi % 2 == 0:
                    break
                lam -= 1
                ph = psi
    return u, metric, rec


# ---------------------------------------------------------------------------
# list decoding

_MIX = np.uint64(0x9E3779B97F4A7C15)


@njit(cache=True, inline="always")
def _sorted_active_arr(active, pid, metric, order_buf, tmp_m, tmp_pid, by_buf, idx, scratch):
    """Active paths ordered by metric (descending), ties to the lower path id."""
    k = 0
    for l in range(active.shape[0]):
        if active[l]:
            order_buf[k] = l
            k += 1
    for j in range(k):
        tmp_pid[j] = pid[order_buf[j]]
    stable_argsort(tmp_pid, k, idx, scratch)
    for j in range(k):
        by_buf[j] = order_buf[idx[j]]
    for j in range(k):
        tmp_m[j] = -metric[by_buf[j]]
    stable_argsort(tmp_m, k, idx, scratch)
    for j in range(k):
        order_buf[j] = by_buf[idx[j]]
    return k


@njit(cache=True)
def _sorted_active(ws, order_buf, tmp_m, tmp_pid):
    by_buf = np.empty(ws.L, dtype=np.int64)
    idx = np.empty(ws.L, dtype=np.int64)
    scratch = np.empty(ws.L, dtype=np.int64)
    return _sorted_active_arr(ws.active, ws.pid, ws.metric, order_buf, tmp_m, tmp_pid, by_buf,
                              idx, scratch)


@njit(cache=True)
def _scl_kernel(ws, llr, frozen_mask, frozen_vals, L, kind, alpha, beta, p_tol, prefix,
                genie_u, use_genie, trace, tr_n, tr_max, tr_pde, tr_m, tr_key, tr_hash, tr_rank):
    N = llr.shape[0]
    me.load_channel(ws, llr)
    root = me.reset(ws)
    n = ws.n
    chan, P, p_off, p_slot, p_ref, p_free, p_nfree = (ws.chan, ws.P, ws.p_off, ws.p_slot,
                                                      ws.p_ref, ws.p_free, ws.p_nfree)
    C, c_off, c_slot, c_ref, c_free, c_nfree = (ws.C, ws.c_off, ws.c_slot, ws.c_ref,
                                                ws.c_free, ws.c_nfree)
    active, metric, phase, counters = ws.active, ws.metric, ws.phase, ws.counters
    pid, next_pid, path_free, path_nfree = ws.pid, ws.next_pid, ws.path_free, ws.path_nfree
    by_buf = np.empty(L, dtype=np.int64)
    by_pid = np.empty(2 * L, dtype=np.int64)
    srt = np.empty(2 * L, dtype=np.int64)
    sort_tmp = np.empty(2 * L, dtype=np.int64)

    cm0 = np.zeros(L)
    cm1 = np.zeros(L)
    correct = np.zeros(L, dtype=np.bool_)
    key = np.zeros(L, dtype=np.uint64)
    hsh = np.zeros(L, dtype=np.uint64)
    correct[root] = True
    cand_m = np.empty(2 * L)
    cand_l = np.empty(2 * L, dtype=np.int64)
    cand_b = np.empty(2 * L, dtype=np.uint8)
    cand_key = np.empty(2 * L, dtype=np.int64)
    keep0 = np.zeros(L, dtype=np.bool_)
    keep1 = np.zeros(L, dtype=np.bool_)
    order = np.empty(L, dtype=np.int64)
    tmp_m = np.empty(2 * L)
    tmp_pid = np.empty(2 * L, dtype=np.int64)
    sorted_m = np.empty(2 * L)

    genie_ratio = np.full(N, np.nan)

    cap = L * (N + 1) + 1
    rec_t = np.empty(cap, dtype=np.int64)
    rec_p = np.empty(cap)
    rec_q = np.empty(cap)
    buf_t = np.empty(cap, dtype=np.int64)
    buf_p = np.empty(cap)
    buf_q = np.empty(cap)
    new_t = np.empty(2 * L, dtype=np.int64)
    new_p = np.empty(2 * L)
    new_q = np.empty(2 * L)
    n_rec = 0
    pde = 0.0
    pde_peak = 0.0
    exhausted = False
    pde_violation = False

    bits = np.zeros(L, dtype=np.uint8)
    kill_ids = np.empty(L, dtype=np.int64)
    fork_ids = np.empty(L, dtype=np.int64)
    fork_out = np.empty(L, dtype=np.int64)

    for phi in range(N):
        level = phi + 1
        me.extend_active(n, chan, P, p_off, p_slot, p_ref, p_free, p_nfree, C, c_off, c_slot,
                         counters, active, phi, cm0, cm1)

        if frozen_mask[phi]:
            # no branching, so no sort and no pruning here
            fv = frozen_vals[phi]
            for l in range(L):
                if active[l]:
                    metric[l] = cm0[l] if fv == 0 else cm1[l]
                    bits[l] = fv
                    correct[l] = correct[l] and genie_u[phi] == fv
                    key[l] = (key[l] << np.uint64(1)) | np.uint64(fv)
                    hsh[l] = (hsh[l] ^ np.uint64(fv + 1)) * _MIX
        else:
            # candidates enumerated in path-id order, bit 0 before bit 1
            a = 0
            for l in range(L):
                if active[l]:
                    order[a] = l
                    tmp_pid[a] = pid[l]
                    a += 1
            stable_argsort(tmp_pid, a, by_pid, sort_tmp)
            c = 0
            for j in range(a):
                l = order[by_pid[j]]
                cand_l[c] = l
                cand_b[c] = 0
                cand_m[c] = cm0[l]
                cand_l[c + 1] = l
                cand_b[c + 1] = 1
                cand_m[c + 1] = cm1[l]
                c += 2
            for j in range(c):
                tmp_m[j] = -cand_m[j]
            stable_argsort(tmp_m, c, srt, sort_tmp)
            counters[me.SORT] += 1
            k = min(L, c)
            for j in range(k):
                cand_key[j] = srt[j]
                sorted_m[j] = cand_m[srt[j]]
            if use_genie:
                tot = log_sum(sorted_m, k)
                for j in range(k):
                    cj = cand_key[j]
                    if correct[cand_l[cj]] and cand_b[cj] == genie_u[phi]:
                        genie_ratio[phi] = sorted_m[j] - tot
            keep = k
            if kind == KIND_STATIC and alpha[phi] > 0.0:
                keep = static_keep(sorted_m, k, log_sum(sorted_m, k), alpha[phi])
            elif kind == KIND_BASELINE:
                keep = baseline_keep(sorted_m, k, beta)
            elif kind == KIND_DYNAMIC:
                # once the budget is used up nothing more is pruned this frame
                prev = p_tol if exhausted else pde
                keep, n_rec, pde = dynamic_step(sorted_m, k, level, p_tol, prev, prefix, L,
                                                rec_t, rec_p, rec_q, n_rec,
                                                buf_t, buf_p, buf_q, new_t, new_p, new_q)
                rec_t, buf_t = buf_t, rec_t
                rec_p, buf_p = buf_p, rec_p
                rec_q, buf_q = buf_q, rec_q
                if pde > pde_peak:
                    pde_peak = pde
                if pde >= p_tol:
                    exhausted = True
                if pde > p_tol:
                    pde_violation = True
            counters[me.PRUNED] += k - keep
            for l in range(L):
                keep0[l] = False
                keep1[l] = False
            for j in range(keep):
                cj = cand_key[j]
                if cand_b[cj] == 0:
                    keep0[cand_l[cj]] = True
                else:
                    keep1[cand_l[cj]] = True
            nk = 0
            nf = 0
            for j in range(a):
                l = order[by_pid[j]]
                if not keep0[l] and not keep1[l]:
                    kill_ids[nk] = l
                    nk += 1
                elif keep0[l] and keep1[l]:
                    fork_ids[nf] = l
                    nf += 1
            me.kill_paths(n, p_slot, p_ref, p_free, p_nfree, c_slot, c_ref, c_free, c_nfree,
                          active, path_free, path_nfree, kill_ids, 0, nk)
            me.fork_paths(n, p_slot, p_ref, c_slot, c_ref, active, path_free, path_nfree, pid,
                          next_pid, phase, metric, counters, fork_ids, nf, fork_out)
            # the clone takes bit 1, the original bit 0
            for j in range(nf):
                l = fork_ids[j]
                f = fork_out[j]
                correct[f] = correct[l] and genie_u[phi] == 1
                key[f] = (key[l] << np.uint64(1)) | np.uint64(1)
                hsh[f] = (hsh[l] ^ np.uint64(2)) * _MIX
                metric[f] = cm1[l]
                bits[f] = 1
            for j in range(a):
                l = order[by_pid[j]]
                if keep0[l] or keep1[l]:
                    bit = 0 if keep0[l] else 1
                    metric[l] = cm0[l] if bit == 0 else cm1[l]
                    bits[l] = bit
                    correct[l] = correct[l] and genie_u[phi] == bit
                    key[l] = (key[l] << np.uint64(1)) | np.uint64(bit)
                    hsh[l] = (hsh[l] ^ np.uint64(bit + 1)) * _MIX

        me.decide_active(n, C, c_off, c_slot, c_ref, c_free, c_nfree, phase, active, bits, phi)

        if trace:
            k = _sorted_active_arr(active, pid, metric, order, tmp_m, tmp_pid, by_buf,
                                   by_pid, sort_tmp)
            tr_n[phi] = k
            tr_pde[phi] = pde
            tr_max[phi] = metric[order[0]]
            for j in range(k):
                tr_m[phi, j] = metric[order[j]]
                tr_key[phi, j] = key[order[j]]
                tr_hash[phi, j] = hsh[order[j]]
                tr_rank[phi, j] = pid[order[j]]

    k = _sorted_active_arr(active, pid, metric, order, tmp_m, tmp_pid, by_buf,
                                   by_pid, sort_tmp)
    u_hat = np.zeros((k, N), dtype=np.uint8)
    fm = np.empty(k)
    fc = np.zeros(k, dtype=np.bool_)
    for j in range(k):
        l = order[j]
        me.read_codeword(ws, l, u_hat[j])
        encode_inplace(u_hat[j])
        fm[j] = metric[l]
        fc[j] = correct[l]
    return u_hat, fm, fc, ws.counters.copy(), pde, pde_peak, pde_violation, genie_ratio


@njit(cache=True)
def _first_crc_pass(u_rows, info_set, poly, width, init, xor_out):
    K = info_set.shape[0]
    bits = np.empty(K, dtype=np.uint8)
    for j in range(u_rows.shape[0]):
        for t in range(K):
            bits[t] = u_rows[j, info_set[t]]
        if _crc_ok(bits, poly, width, init, xor_out):
            return j
    return -1


def select_final(u_rows, metrics, spec, use_crc=True):
    """Pick the decision from the final list (rows sorted by metric, best first).

    Returns ``(row index, status)``.  With a CRC, the best CRC-passing row
    wins; if none passes the best row is returned with CRCFailAllPaths.
    """
    if len(u_rows) == 0:
        return -1, Status.LIST_EMPTIED
    if use_crc and spec.crc is not None:
        c = spec.crc
        j = _first_crc_pass(np.ascontiguousarray(u_rows, dtype=np.uint8),
                            spec.info_set.astype(np.int64), c.poly, c.width, c.init, c.xor_out)
        if j >= 0:
            return int(j), Status.SUCCESS_CRC
        return 0, Status.CRC_FAIL_ALL_PATHS
    return 0, Status.SUCCESS_MAX_METRIC


def _policy_args(policy, N):
    kind = policy.kind
    alpha = np.zeros(1)
    beta = 0.0
    p_tol = 0.0
    prefix = np.zeros(N + 1)
    if kind == KIND_STATIC:
        alpha = np.asarray(policy.alpha, dtype=np.float64)
        if alpha.shape != (N,):
            raise ConfigurationError(f"static table must have {N} entries")
    elif kind == KIND_DYNAMIC:
        p_tol = float(policy.p_tol)
        prefix = policy.prefix
        if prefix.shape != (N + 1,):
            raise ConfigurationError(f"LLR budget must have {N} entries")
    elif kind == KIND_BASELINE:
        beta = float(policy.beta)
    elif kind != KIND_OFF:
        raise ConfigurationError(f"unknown pruning policy {policy!r}")
    return kind, alpha, beta, p_tol, prefix


class ListDecoder:
    """Reusable SCL / CA-SCL decoder for one code, list size and policy.

    The object holds immutable configuration plus a private workspace, so use
    one instance per thread or process.
    """

    def __init__(self, spec, L, policy=None, use_crc=True):
        if L < 1:
            raise ConfigurationError("list size must be >= 1")
        self.spec = spec
        self.L = int(L)
        self.policy = Off() if policy is None else policy
        self.use_crc = use_crc and spec.crc is not None
        self._ws = me.new_workspace(spec.n, self.L)
        self._frozen_mask = ~spec.info_mask
        self._frozen_vals = spec.frozen_word()
        self._pargs = _policy_args(self.policy, spec.N)
        self._info = spec.info_set.astype(np.int64)

    def decode(self, llr, genie_u=None, trace=False):
        N, L = self.spec.N, self.L
        llr = np.ascontiguousarray(llr, dtype=np.float64)
        if llr.shape != (N,):
            raise ConfigurationError(f"expected {N} LLRs, got shape {llr.shape}")
        use_genie = genie_u is not None
        gu = np.asarray(genie_u, dtype=np.uint8) if use_genie else np.zeros(N, dtype=np.uint8)
        T = N if trace else 1
        tr = dict(n=np.zeros(T, dtype=np.int64), max=np.zeros(T), pde=np.zeros(T),
                  m=np.full((T, L), np.nan), key=np.zeros((T, L), dtype=np.uint64),
                  hash=np.zeros((T, L), dtype=np.uint64), pid=np.zeros((T, L), dtype=np.int64))
        kind, alpha, beta, p_tol, prefix = self._pargs
        u_rows, fm, fc, counters, pde, pde_peak, viol, genie_ratio = _scl_kernel(
            self._ws, llr, self._frozen_mask, self._frozen_vals, L, kind, alpha, beta, p_tol,
            prefix, gu, use_genie, trace, tr["n"], tr["max"], tr["pde"], tr["m"], tr["key"],
            tr["hash"], tr["pid"])
        j, status = select_final(u_rows, fm, self.spec, self.use_crc)
        u_hat = u_rows[j]
        info = u_hat[self._info]
        out = DecodeOutcome(
            u_hat=u_hat, info_bits=info, payload=info[:self.spec.payload_length],
            status=status, counters=ComplexityCounters.from_array(counters), metric=float(fm[j]),
            pde=float(pde), pde_peak=float(pde_peak), genie_log_ratio=genie_ratio if use_genie else None,
        )
        out.trace["pde_violation"] = bool(viol)
        out.trace["final_metrics"] = fm
        out.trace["final_correct"] = fc
        out.trace["final_rows"] = u_rows
        if trace:
            out.trace.update(tr)
        return out


def decode_sc(spec, obs):
    """Greedy SC decoding: each information bit takes the larger-metric child."""
    llr = obs.llr if hasattr(obs, "llr") else obs
    llr = np.ascontiguousarray(llr, dtype=np.float64)
    if llr.shape != (spec.N,):
        raise ConfigurationError(f"expected {spec.N} LLRs")
    u, metric, rec = _sc_kernel(llr, ~spec.info_mask, spec.frozen_word())
    info = u[spec.info_set]
    return DecodeOutcome(
        u_hat=u, info_bits=info, payload=info[:spec.payload_length],
        status=Status.SUCCESS_MAX_METRIC,
        # one 2-way selection per information bit
        counters=ComplexityCounters(int(rec), 0, int(spec.K), 0), metric=float(metric),
    )


def decode_scl(spec, obs, L, prune_policy=None, use_crc=True, **kw):
    llr = obs.llr if hasattr(obs, "llr") else obs
    return ListDecoder(spec, L, prune_policy, use_crc=use_crc).decode(llr, **kw)
