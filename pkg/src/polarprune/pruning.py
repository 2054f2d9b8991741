"""Tree pruning for list decoding of polar codes.

Three policies share one hook that runs right after the survivors of a bit
are sorted:

* ``StaticTable``: drop path j when P_j < alpha_i * sum_k P_k, with the
  per-bit alpha table calibrated by Monte Carlo runs of the unpruned decoder.
* ``Dynamic``: spend a tolerated FER loss ``p_tol``.  Each bit drops the
  lowest-metric paths whose probability share fits in the budget left over
  from earlier bits.  A ledger of pruned records bounds the loss already
  spent, using LLR budgets that upper-bound how fast a pruned path's
  descendants can lose metric.
* ``MaxRatioBaseline``: the conventional rule P_j < beta * max_k P_k, kept
  for complexity comparisons.

All arithmetic uses log metrics.  Shares P_j / sum_k P_k are formed after
subtracting the level's logsumexp, so the unknown scale of the metrics
cancels.
"""
import json
import math
import warnings
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.stats import norm

from ._sort import stable_argsort
from .construction import ReliabilityKind
from .errors import CalibrationError, ConfigurationError, UnsupportedConstructionError

KIND_OFF, KIND_STATIC, KIND_DYNAMIC, KIND_BASELINE = 0, 1, 2, 3

ALPHA_CAP = math.nextafter(1.0, 0.0)


@dataclass(frozen=True)
class Off:
    kind = KIND_OFF


@dataclass(frozen=True)
class StaticTable:
    alpha: np.ndarray
    kind = KIND_STATIC

    def __post_init__(self):
        a = np.asarray(self.alpha, dtype=np.float64)
        if np.any(a < 0) or np.any(a >= 1):
            raise ConfigurationError("static thresholds must lie in [0, 1)")
        object.__setattr__(self, "alpha", a)


@dataclass(frozen=True)
class Dynamic:
    p_tol: float
    llr_budget: np.ndarray
    p_llr: float = float("nan")
    kind = KIND_DYNAMIC

    def __post_init__(self):
        if not 0.0 < self.p_tol < 1.0:
            raise ConfigurationError("p_tol must lie in (0, 1)")
        lb = np.asarray(self.llr_budget, dtype=np.float64)
        if not np.all(np.isfinite(lb)) or np.any(lb < 0):
            raise ConfigurationError("LLR budgets must be finite and non-negative")
        object.__setattr__(self, "llr_budget", lb)

    @property
    def prefix(self):
        return bound_prefix(self.llr_budget)


@dataclass(frozen=True)
class MaxRatioBaseline:
    beta: float
    kind = KIND_BASELINE

    def __post_init__(self):
        if not 0.0 <= self.beta < 1.0:
            raise ConfigurationError("beta must lie in [0, 1)")


# ---------------------------------------------------------------------------
# per-level rules (jitted, called from inside the decoder loop)

@njit(cache=True)
def log_sum(logm, k):
    mx = logm[0]
    for j in range(1, k):
        if logm[j] > mx:
            mx = logm[j]
    acc = 0.0
    for j in range(k):
        acc += np.exp(logm[j] - mx)
    return mx + np.log(acc)


@njit(cache=True)
def static_keep(sorted_logm, k, log_total, alpha):
    """Number of leading (largest) survivors kept by the sum-threshold rule."""
    keep = k
    while keep > 1 and np.exp(sorted_logm[keep - 1] - log_total) < alpha:
        keep -= 1
    return keep


@njit(cache=True)
def baseline_keep(sorted_logm, k, beta):
    if beta <= 0.0:
        return k
    cut = sorted_logm[0] + np.log(beta)
    keep = k
    while keep > 1 and sorted_logm[keep - 1] < cut:
        keep -= 1
    return keep


@njit(cache=True)
def budget_keep(sorted_logm, k, log_total, budget_frac):
    """Drop from the bottom while the dropped share stays within budget_frac."""
    keep = k
    if budget_frac <= 0.0:
        return keep
    cum = 0.0
    while keep > 1:
        r = np.exp(sorted_logm[keep - 1] - log_total)
        if cum + r > budget_frac:
            break
        cum += r
        keep -= 1
    return keep


@njit(cache=True)
def estimate_loss_kernel(rec_t, rec_p, rec_q, n_rec, level, prefix, surv_logm, n_surv, L):
    """Upper bound on the FER loss spent by the records still active."""
    if n_rec == 0:
        return 0.0
    max_z = -np.inf
    for k in range(n_rec):
        z = rec_p[k] + prefix[level] - prefix[rec_t[k]]
        if z > max_z:
            max_z = z
    strong = 0
    for j in range(n_surv):
        if surv_logm[j] >= max_z:
            strong += 1
    need = L - strong
    if need <= 0:
        return 0.0
    if need >= n_rec:
        return rec_q[:n_rec].sum()
    q = np.sort(rec_q[:n_rec])
    return q[n_rec - need:].sum()


@njit(cache=True)
def update_ledger_kernel(rec_t, rec_p, rec_q, n_rec, new_t, new_p, new_q, n_new,
                         level, prefix, L, out_t, out_p, out_q):
    """Merge new records, then deactivate those whose bound fell below Z_min.

    Z_min is the smallest descendant bound among the L records with the
    largest losses.  Writes the surviving ledger into ``out_*`` and returns
    its size.
    """
    m = 0
    for k in range(n_rec):
        out_t[m] = rec_t[k]
        out_p[m] = rec_p[k]
        out_q[m] = rec_q[k]
        m += 1
    for k in range(n_new):
        out_t[m] = new_t[k]
        out_p[m] = new_p[k]
        out_q[m] = new_q[k]
        m += 1
    if m <= L:
        return m
    z = np.empty(m)
    for k in range(m):
        z[k] = out_p[k] + prefix[level] - prefix[out_t[k]]
    neg_q = np.empty(m)
    for k in range(m):
        neg_q[k] = -out_q[k]
    order = np.empty(m, dtype=np.int64)
    stable_argsort(neg_q, m, order, np.empty(m, dtype=np.int64))
    z_min = np.inf
    for r in range(L):
        if z[order[r]] < z_min:
            z_min = z[order[r]]
    w = 0
    for k in range(m):
        if z[k] >= z_min:
            out_t[w] = out_t[k]
            out_p[w] = out_p[k]
            out_q[w] = out_q[k]
            w += 1
    return w


@njit(cache=True)
def dynamic_step(sorted_logm, k, level, p_tol, pde_prev, prefix, L,
                 rec_t, rec_p, rec_q, n_rec, buf_t, buf_p, buf_q, new_t, new_p, new_q):
    """Choose how many survivors to keep and refresh the ledger.

    Returns (keep, n_rec_new, pde).  The new ledger is left in ``buf_*``.
    The budget rule fixes the largest admissible prune set; it is shrunk only
    if the refreshed loss estimate would exceed ``p_tol``.
    """
    log_total = log_sum(sorted_logm, k)
    keep = budget_keep(sorted_logm, k, log_total, p_tol - pde_prev)
    while True:
        n_new = 0
        for j in range(keep, k):
            new_t[n_new] = level
            new_p[n_new] = sorted_logm[j]
            new_q[n_new] = np.exp(sorted_logm[j] - log_total)
            n_new += 1
        n_out = update_ledger_kernel(rec_t, rec_p, rec_q, n_rec, new_t, new_p, new_q, n_new,
                                     level, prefix, L, buf_t, buf_p, buf_q)
        pde = estimate_loss_kernel(buf_t, buf_p, buf_q, n_out, level, prefix,
                                   sorted_logm, keep, L)
        if pde <= p_tol or keep == k:
            return keep, n_out, pde
        keep += 1


# ---------------------------------------------------------------------------
# python-level API

def _log_metrics(metrics):
    m = np.asarray(metrics, dtype=np.float64)
    return m


def _sorted_desc(logm):
    order = np.argsort(-logm, kind="stable")
    return order, logm[order]


def apply_static_rule(metrics, alpha):
    """Indices (into ``metrics``, given as log metrics) dropped by the sum rule."""
    logm = _log_metrics(metrics)
    if alpha <= 0.0 or logm.size == 0:
        return set()
    order, s = _sorted_desc(logm)
    keep = static_keep(s, len(s), log_sum(s, len(s)), alpha)
    return set(int(j) for j in order[keep:])


def apply_baseline_rule(metrics, beta):
    logm = _log_metrics(metrics)
    order, s = _sorted_desc(logm)
    keep = baseline_keep(s, len(s), beta)
    return set(int(j) for j in order[keep:])


def deletion_loss(log_p, log_sum_metrics):
    """Probability that the deleted path was the correct one, P_j / sum_k P_k."""
    q = math.exp(log_p - log_sum_metrics)
    return min(max(q, 0.0), 1.0)


def select_prune_set(metrics, p_tol, pde_prev):
    """Budgeted prune set for one level.

    Returns ``(pruned indices, alpha report, {index: loss})`` where the alpha
    report is the retained share of the metric mass.
    """
    logm = _log_metrics(metrics)
    order, s = _sorted_desc(logm)
    total = log_sum(s, len(s))
    keep = budget_keep(s, len(s), total, p_tol - pde_prev)
    pruned = [int(j) for j in order[keep:]]
    losses = {j: deletion_loss(logm[j], total) for j in pruned}
    alpha = math.exp(log_sum(s, keep) - total)
    return set(pruned), alpha, losses


def llr_budget(profile, p_llr):
    """Per-index LLR magnitudes exceeded with probability at most p_llr.

    Under the Gaussian approximation the decision LLR of index i is
    Normal(m_i, 2 m_i); the budget is its two-sided (1 - p_llr) quantile.
    """
    if profile.kind is not ReliabilityKind.GA_MEAN_LLR:
        raise UnsupportedConstructionError("LLR budgets need a Gaussian-approximation profile")
    if not 0.0 < p_llr < 1.0:
        raise ConfigurationError("p_llr must lie in (0, 1)")
    z = norm.isf(p_llr / 2.0)
    m = np.maximum(np.asarray(profile.values, dtype=np.float64), 0.0)
    return m + z * np.sqrt(2.0 * m)


def bound_prefix(budgets):
    """prefix[j] = sum_{k<=j} log(e^l_k / (1 + e^l_k)), prefix[0] = 0."""
    lb = np.asarray(budgets, dtype=np.float64)
    return np.concatenate([[0.0], np.cumsum(-np.logaddexp(0.0, -lb))])


def metric_upper_bound(prefix, i, j, log_p_i):
    """Log upper bound at level j on descendants of a level-i path with metric log_p_i."""
    if not 0 <= i < j < len(prefix):
        raise ValueError(f"need 0 <= i < j <= N, got i={i}, j={j}")
    return log_p_i + prefix[j] - prefix[i]


@dataclass(frozen=True)
class PrunedRecord:
    t: int          # level (1-based bit count) at pruning time
    log_p: float    # log metric when pruned
    q: float        # estimated loss of deleting it

    def bound(self, level, prefix):
        """Log Z: the pruned metric decayed by the budget factors over (t, level]."""
        if level < self.t:
            raise ValueError("record is newer than the requested level")
        return self.log_p + prefix[level] - prefix[self.t]


def descendant_bound(record, level, prefix):
    return record.bound(level, prefix)


class RecordLedger:
    """Active pruned records plus the accumulated loss bound."""

    def __init__(self, L, prefix):
        self.L = L
        self.prefix = np.asarray(prefix, dtype=np.float64)
        self.records = []
        self.pde = 0.0

    def _arrays(self, recs):
        return (np.array([r.t for r in recs], dtype=np.int64),
                np.array([r.log_p for r in recs], dtype=np.float64),
                np.array([r.q for r in recs], dtype=np.float64))

    def estimate_accumulated_loss(self, level, survivors):
        surv = np.sort(np.asarray(survivors, dtype=np.float64))[::-1].copy()
        t, p, q = self._arrays(self.records)
        return float(estimate_loss_kernel(t, p, q, len(self.records), level, self.prefix,
                                          surv, len(surv), self.L))

    def update(self, new_records, level, survivors=None):
        recs = list(self.records) + list(new_records)
        if len(recs) > self.L:
            z = [r.bound(level, self.prefix) for r in recs]
            top = sorted(range(len(recs)), key=lambda k: -recs[k].q)[:self.L]
            z_min = min(z[k] for k in top)
            recs = [r for r, zk in zip(recs, z) if zk >= z_min]
        self.records = recs
        if survivors is not None:
            self.pde = self.estimate_accumulated_loss(level, survivors)
        return self


# ---------------------------------------------------------------------------
# persistence

def save_static_table(path, alpha, *, code_hash, L, sigma, n_frames):
    doc = {"code_hash": code_hash, "L": int(L), "sigma": float(sigma),
           "n_frames": int(n_frames), "alpha": [float(a) for a in alpha]}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
    return doc


def load_static_table(path, *, code_hash=None, L=None, sigma=None):
    with open(path) as fh:
        doc = json.load(fh)
    if code_hash is not None and doc["code_hash"] != code_hash:
        raise ConfigurationError("static table was calibrated for a different code")
    if L is not None and doc["L"] != L:
        warnings.warn(f"static table calibrated for L={doc['L']}, used with L={L}")
    if sigma is not None and not math.isclose(doc["sigma"], sigma, rel_tol=1e-9):
        warnings.warn(f"static table calibrated at sigma={doc['sigma']:.5f}, used at {sigma:.5f}")
    return StaticTable(np.array(doc["alpha"], dtype=np.float64)), doc


def save_budget(path, budgets, *, code_hash, p_llr):
    doc = {"code_hash": code_hash, "p_llr": float(p_llr), "l": [float(v) for v in budgets]}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
    return doc


def load_budget(path, *, code_hash=None):
    with open(path) as fh:
        doc = json.load(fh)
    if code_hash is not None and doc["code_hash"] != code_hash:
        raise ConfigurationError("LLR budget file belongs to a different code")
    return np.array(doc["l"], dtype=np.float64), doc


# ---------------------------------------------------------------------------
# Monte Carlo calibration of the static table

def finalize_alpha(running_min):
    """Clamp a running-minimum table into [0, 1); never-updated levels become 0."""
    a = np.asarray(running_min, dtype=np.float64).copy()
    untouched = ~np.isfinite(a)
    a = np.minimum(a, ALPHA_CAP)
    a[untouched] = 0.0
    return a


def calibrate_static(spec, channel, L, n_frames, seed, *, use_crc=True, start_frame=0):
    """Per-level minimum of the correct path's metric share over correct frames.

    Returns ``(StaticTable, n_correct)``.  Frames are generated exactly as by
    the simulation harness, so tables are reproducible from ``seed``.
    """
    from .decoder import ListDecoder
    from .harness import make_frame

    if n_frames < 1:
        raise ConfigurationError("n_frames must be >= 1")
    dec = ListDecoder(spec, L, use_crc=use_crc)
    running = np.full(spec.N, np.inf)
    n_correct = 0
    for f in range(start_frame, start_frame + n_frames):
        payload, u, obs = make_frame(spec, channel, seed, f)
        out = dec.decode(obs.llr, genie_u=u)
        if not np.array_equal(out.payload, payload):
            continue
        n_correct += 1
        ratio = np.exp(out.genie_log_ratio)
        running = np.fmin(running, ratio)
    if n_correct == 0:
        raise CalibrationError("no correctly decoded frame; calibration impossible")
    return StaticTable(finalize_alpha(running)), n_correct
