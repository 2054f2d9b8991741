import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import encode, prefix_log_metric
from polarprune import metrics as me
from polarprune.metrics import NEG_FLOOR, PathWorkspaces, normalize_level


def full_tree(n, llr):
    """Grow every path of the code tree; returns {prefix: log metric} per level."""
    N = 1 << n
    pw = PathWorkspaces(n, 1 << N)
    root = pw.load(llr)
    paths = {(): root}
    levels = []
    for i in range(N):
        nxt = {}
        for prefix, p in paths.items():
            m0, m1 = pw.extend_path_metrics(p, i)
            q = pw.fork(p)
            pw.decide(p, i, 0)
            pw.decide(q, i, 1)
            assert pw.metric(p) == m0 and pw.metric(q) == m1
            nxt[prefix + (0,)] = p
            nxt[prefix + (1,)] = q
        paths = nxt
        levels.append({k: pw.metric(v) for k, v in paths.items()})
    return pw, paths, levels


def test_single_channel_base_case():
    L = 1.7
    pw = PathWorkspaces(0, 1)
    p = pw.load([L])
    m0, m1 = pw.extend_path_metrics(p, 0)
    assert m0 == pytest.approx(np.log(np.exp(L) / (1 + np.exp(L))), abs=1e-15)
    assert m1 == pytest.approx(np.log(1 / (1 + np.exp(L))), abs=1e-15)


def test_noiseless_true_path_has_probability_one():
    pw = PathWorkspaces(1, 1)
    p = pw.load([800.0, 800.0])
    for i in range(2):
        pw.extend_path_metrics(p, i)
        pw.decide(p, i, 0)
        assert pw.metric(p) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.invariant
@pytest.mark.parametrize("n", [1, 2, 3])
def test_brute_force_metrics(n):
    rng = np.random.default_rng(100 + n)
    N = 1 << n
    for _ in range(100 if n < 3 else 25):
        llr = rng.normal(1.5, 2.0, N) * rng.choice([-1, 1], N)
        _, _, levels = full_tree(n, llr)
        for i, table in enumerate(levels):
            for prefix, m in table.items():
                # log-domain difference = relative error of the probability
                assert abs(m - prefix_log_metric(llr, prefix)) <= 1e-10


def test_brute_force_metrics_n3_sampled_paths():
    rng = np.random.default_rng(7)
    for _ in range(100):
        llr = rng.normal(0.0, 3.0, 8)
        pw = PathWorkspaces(3, 1)
        p = pw.load(llr)
        u = rng.integers(0, 2, 8)
        for i in range(8):
            pw.extend_path_metrics(p, i)
            pw.decide(p, i, int(u[i]))
            assert abs(pw.metric(p) - prefix_log_metric(llr, u[:i + 1])) <= 1e-10


@pytest.mark.invariant
@settings(max_examples=40, deadline=None)
@given(st.integers(1, 3), st.integers(0, 2**31 - 1))
def test_level_conservation(n, seed):
    llr = np.random.default_rng(seed).normal(0.0, 4.0, 1 << n)
    _, _, levels = full_tree(n, llr)
    parent = {(): 0.0}
    for table in levels:
        for prefix, m in parent.items():
            pair = np.logaddexp(table[prefix + (0,)], table[prefix + (1,)])
            assert pair == pytest.approx(m, abs=1e-10)
        parent = table


@pytest.mark.invariant
@settings(max_examples=25, deadline=None)
@given(st.integers(1, 3), st.integers(0, 2**31 - 1))
def test_partial_sums_reencode(n, seed):
    llr = np.random.default_rng(seed).normal(0.0, 2.0, 1 << n)
    pw, paths, _ = full_tree(n, llr)
    for prefix, p in paths.items():
        assert np.array_equal(pw.codeword(p), encode(prefix))


def test_fork_then_opposite_bits_diverge_only_where_written():
    pw = PathWorkspaces(3, 2)
    p = pw.load(np.linspace(-2, 2, 8))
    for i, b in enumerate([0, 1, 1]):
        pw.extend_path_metrics(p, i)
        pw.decide(p, i, b)
    q = pw.fork(p)
    assert pw.counters()["path_copies"] == 1
    assert all(pw.ws.c_slot[lam, p] == pw.ws.c_slot[lam, q] for lam in range(4))
    pw.extend_path_metrics(p, 3)
    pw.extend_path_metrics(q, 3)
    pw.decide(p, 3, 0)
    pw.decide(q, 3, 1)
    # bit 3 writes layers 3, 2, 1; layer 0 is still shared
    for lam in (1, 2, 3):
        assert pw.ws.c_slot[lam, p] != pw.ws.c_slot[lam, q]
    s0 = pw.ws.c_slot[0, p]
    assert pw.ws.c_slot[0, q] == s0 and pw.ws.c_ref[0, s0] == 2
    for i in range(4, 8):
        for path in (p, q):
            pw.extend_path_metrics(path, i)
            pw.decide(path, i, 0)
    assert np.array_equal(pw.codeword(p), encode([0, 1, 1, 0, 0, 0, 0, 0]))
    assert np.array_equal(pw.codeword(q), encode([0, 1, 1, 1, 0, 0, 0, 0]))


@pytest.mark.invariant
def test_single_path_never_forks():
    pw = PathWorkspaces(4, 1)
    p = pw.load(np.ones(16))
    for i in range(16):
        pw.extend_path_metrics(p, i)
        pw.decide(p, i, 0)
    c = pw.counters()
    assert c["path_copies"] == 0
    assert c["metric_recursions"] == 16 * 4


def test_frozen_child_gets_floor():
    pw = PathWorkspaces(2, 1)
    p = pw.load(np.ones(4))
    m0, m1 = pw.extend_path_metrics(p, 0, frozen_value=0)
    assert m1 == NEG_FLOOR and m0 < 0


def test_out_of_order_level_is_rejected():
    pw = PathWorkspaces(2, 1)
    p = pw.load(np.ones(4))
    with pytest.raises(RuntimeError):
        pw.extend_path_metrics(p, 1)


@pytest.mark.parametrize("metrics,shifted,offset", [
    ((-1.0, -3.0), (0.0, -2.0), -1.0),
    ((-5.0,), (0.0,), -5.0),
])
def test_normalize_examples(metrics, shifted, offset):
    out, off = normalize_level(metrics)
    assert out.tolist() == list(shifted) and off == offset


@pytest.mark.invariant
@given(st.lists(st.floats(-700, 0), min_size=1, max_size=64))
def test_normalize_preserves_ratios(m):
    m = np.array(m)
    out, _ = normalize_level(m)
    def share(v):
        w = np.exp(v - v.max())
        return w / w.sum()
    r0, r1 = share(m), share(out)
    np.testing.assert_allclose(r0, r1, rtol=0, atol=1e-15)


def test_normalize_all_floor_fails():
    with pytest.raises(FloatingPointError):
        normalize_level([NEG_FLOOR, NEG_FLOOR])


def _pool_state(ws):
    return [np.array(a, copy=True) for a in ws[2:]]


@pytest.mark.invariant
@settings(max_examples=30, deadline=None)
@given(st.integers(2, 5), st.integers(1, 8), st.integers(0, 2**31 - 1))
def test_batched_passes_match_per_path_routines(n, L, seed):
    """Random list evolutions through both code paths leave identical pools."""
    rng = np.random.default_rng(seed)
    N = 1 << n
    llr = rng.normal(0.5, 2.0, N)
    a, b = me.new_workspace(n, L), me.new_workspace(n, L)
    for ws in (a, b):
        me.load_channel(ws, llr)
        me.reset(ws)
    m0, m1 = np.zeros(L), np.zeros(L)
    bits = np.zeros(L, dtype=np.uint8)
    for phi in range(N):
        me.extend_active(a.n, a.chan, a.P, a.p_off, a.p_slot, a.p_ref, a.p_free, a.p_nfree,
                         a.C, a.c_off, a.c_slot, a.counters, a.active, phi, m0, m1)
        for l in np.flatnonzero(b.active):
            r0, r1 = me.calc_metrics(b, l, phi)
            assert (r0, r1) == (m0[l], m1[l])
        live = np.flatnonzero(a.active)
        kill = [l for l in live if rng.random() < 0.25 and len(live) > 1][:len(live) - 1]
        survivors = [l for l in live if l not in kill]
        room = L - len(survivors)
        fork = [l for l in survivors if rng.random() < 0.5][:room]
        ids = np.array(kill + [0], dtype=np.int64)
        me.kill_paths(a.n, a.p_slot, a.p_ref, a.p_free, a.p_nfree, a.c_slot, a.c_ref, a.c_free,
                      a.c_nfree, a.active, a.path_free, a.path_nfree, ids, 0, len(kill))
        for l in kill:
            me.kill_path(b, l)
        out = np.zeros(max(len(fork), 1), dtype=np.int64)
        me.fork_paths(a.n, a.p_slot, a.p_ref, a.c_slot, a.c_ref, a.active, a.path_free,
                      a.path_nfree, a.pid, a.next_pid, a.phase, a.metric, a.counters,
                      np.array(fork + [0], dtype=np.int64), len(fork), out)
        clones = [me.fork_path(b, l) for l in fork]
        assert clones == out[:len(fork)].tolist()
        bits[:] = rng.integers(0, 2, L)
        me.decide_active(a.n, a.C, a.c_off, a.c_slot, a.c_ref, a.c_free, a.c_nfree, a.phase,
                         a.active, bits, phi)
        for l in np.flatnonzero(b.active):
            me.set_decision(b, l, phi, bits[l])
            me.update_partial_sums(b, l, phi)
        for x, y in zip(_pool_state(a), _pool_state(b)):
            assert np.array_equal(x, y)
