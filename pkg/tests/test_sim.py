import csv
import math

import numpy as np
import pytest

from mrbcra import analysis, sim
from mrbcra.config import SystemConfig
from mrbcra.csmud import generate_codebook
from mrbcra.errors import DomainError, InsufficientSamples
from oracles import failures_by_enumeration

REFERENCE = dict(L=32, N=320, M=8, T=640, D=25, Kbar=64)


def _cfg(**kw):
    return SystemConfig(**{**REFERENCE, **kw})


@pytest.fixture(scope="module")
def run_12():
    return sim.run(_cfg(lam=12.0, slots=3000, seed=21), "abstract")


# ---------------------------------------------------------------- trivial cases


def test_zero_load_stays_empty():
    m = sim.run(_cfg(lam=0.0, slots=50), "abstract")
    assert all(r.backlog == 0 and r.transmitted == 0 for r in m.trace)
    assert m.throughput_per_rb == 0.0
    assert m.normalized_delay == 1.0
    assert m.blocked_fraction == 0.0


def test_single_packet_is_delivered_immediately():
    # one RB, one SC pool large enough that a lone packet always succeeds
    cfg = SystemConfig(L=4, N=4, M=1, T=8, D=2, Kbar=3, lam=0.0, slots=1)
    state = sim.initial_state(1)
    state.pkt_id = np.array([0])
    state.arrival = np.array([0])
    state.attempts = np.array([0])
    state.rb = np.array([0])
    state.next_id = 1
    state, rec = sim.step_abstract(state, cfg)
    assert (rec.transmitted, rec.successful) == (1, 1)
    assert state.total == 0
    assert rec.delivered_delay_sum == 1


def test_unknown_mode_and_bad_warmup():
    with pytest.raises(DomainError):
        sim.run(_cfg(lam=1.0, slots=10), "quantum")
    with pytest.raises(DomainError):
        sim.run(_cfg(lam=1.0, slots=10), "abstract", warmup_slots=10)


def test_default_warmup():
    assert sim.default_warmup(10_000) == 1000
    assert sim.default_warmup(500) == 200
    assert sim.default_warmup(100) == 99


# ---------------------------------------------------------------- invariants


def test_packet_conservation(run_12):
    tr = run_12.trace
    for r in tr:
        assert r.successful + r.collided_or_failed == r.transmitted
        assert r.arrivals_admitted + r.arrivals_blocked == r.arrivals_offered
        assert np.array_equal(r.per_rb[:, 0], r.per_rb[:, 1] + r.per_rb[:, 2])
        # fast retrial: everything pending transmits
        assert r.transmitted == r.backlog
    for a, b in zip(tr, tr[1:]):
        assert b.backlog == a.backlog - a.successful + b.arrivals_admitted


def test_rate_control_invariant():
    cfg = _cfg(lam=1.2 * analysis.lambda_max(320, 25)[0], slots=300, seed=2)
    state = sim.initial_state(cfg.M)
    prev_K = None
    saw_block = False
    for _ in range(cfg.slots):
        flags = state.blocked.copy()
        before = state.per_rb_pending
        state, rec = sim.step_abstract(state, cfg)
        admitted_per_rb = rec.per_rb[:, 0] - before
        if prev_K is not None:
            assert np.array_equal(flags, prev_K > cfg.Kbar)
        assert np.all(admitted_per_rb[flags] == 0)
        assert rec.rate_control_active == int(flags.sum())
        saw_block |= bool(flags.any())
        prev_K = rec.per_rb[:, 0]
    assert saw_block


def test_same_seed_same_trace_with_and_without_workers():
    cfg = _cfg(lam=14.0, slots=200, seed=5)
    a = sim.run(cfg, "abstract")
    b = sim.run(cfg, "abstract", workers=4)
    c = sim.run(cfg.replace(seed=6), "abstract")
    key = lambda m: [(r.arrivals_offered, r.successful, r.backlog, r.per_rb.tolist()) for r in m.trace]  # noqa: E731
    assert key(a) == key(b)
    assert key(a) != key(c)


# ---------------------------------------------------------------- agreement with the analysis


def test_abstract_mode_matches_steady_state(run_12):
    ss = analysis.solve_lambda1(12.0, 320, 25)
    assert run_12.mean_K_per_rb == pytest.approx(ss.lambda1, rel=0.03)
    assert run_12.normalized_delay == pytest.approx(ss.delay, rel=0.03)
    assert run_12.throughput_per_rb == pytest.approx(12.0, rel=0.03)
    assert run_12.blocked_fraction == 0.0


def test_many_rbs_match_steady_state_near_capacity():
    # with many RBs the all-RBs-overloaded trap is out of reach at this load
    m = sim.run(_cfg(M=64, lam=15.0, slots=400, seed=3), "abstract", warmup_slots=100)
    assert m.mean_K_per_rb == pytest.approx(analysis.solve_lambda1(15.0, 320, 25).lambda1, rel=0.03)


def test_conditional_failures_match_U(run_12):
    rows = np.concatenate([r.per_rb for r in run_12.trace[run_12.warmup_slots :]])
    checked = 0
    for K in np.unique(rows[:, 0]):
        fails = rows[rows[:, 0] == K, 2].astype(float)
        if len(fails) < 300:
            continue
        se = fails.std(ddof=1) / math.sqrt(len(fails))
        assert abs(fails.mean() - analysis.unsuccessful_mean(int(K), 320, 25)) < 4 * se + 1e-12
        checked += 1
    assert checked >= 5


def test_delay_identities(run_12):
    m = run_12
    assert m.normalized_delay == pytest.approx(m.mean_K_per_rb / m.throughput_per_rb, rel=1e-12)
    # Little's law: per-packet sojourn time matches backlog / throughput
    assert m.mean_packet_delay_slots == pytest.approx(m.normalized_delay, rel=0.03)


# ---------------------------------------------------------------- ALOHA


def test_aloha_cap():
    m = sim.run_aloha(_cfg(lam=32.0, slots=1500, seed=4))
    per_slot = np.array([r.successful for r in m.trace[m.warmup_slots :]]) / 8
    # batch means absorb the slot-to-slot correlation
    batches = per_slot[: len(per_slot) // 50 * 50].reshape(50, -1).mean(axis=1)
    se = batches.std(ddof=1) / math.sqrt(len(batches))
    assert m.throughput_per_rb <= 32 / math.e + 3 * se


def test_aloha_light_load_delivers_everything():
    m = sim.run_aloha(_cfg(lam=2.0, slots=800, seed=4))
    assert m.throughput_per_rb == pytest.approx(2.0, rel=0.05)
    assert m.blocked_fraction == 0.0


def test_aloha_without_control_transmits_everything():
    m = sim.run_aloha(_cfg(lam=4.0, slots=300, seed=4), control=False)
    assert all(r.transmitted == r.backlog for r in m.trace)


# ---------------------------------------------------------------- drift


def _expected_successes(K, N, D):
    return K - analysis.unsuccessful_mean(K, N, D)


@pytest.mark.parametrize("N, D", [(4, 3), (8, 5), (320, 25), (1000, 40)])
def test_expected_successes_increase_up_to_D(N, D):
    # K (1 - 1/N)^(K-1) grows with K up to D and equals B at K = D, so inside
    # {B <= K_m <= D} the smallest service rate sits at ceil(B), not at B
    B = analysis.stability_bound(D, N)
    f = [_expected_successes(K, N, D) for K in range(D + 1)]
    assert all(a < b for a, b in zip(f[1:], f[2:]))
    assert f[D] == pytest.approx(B, rel=1e-12)
    if N**D < 10**5:
        for K in range(D + 1):
            assert f[K] == pytest.approx(K - float(failures_by_enumeration(K, N, D)), abs=1e-12)


def test_drift_probe_bounds():
    cfg = SystemConfig(L=8, N=8, M=2, T=16, D=5, Kbar=16, lam=2.0, seed=1)
    est = sim.drift_probe(cfg, samples=5000)
    B = analysis.stability_bound(cfg.D, cfg.N)
    inner, outer = est["interior"], est["complement"]
    assert inner.count + outer.count == 5000
    weakest = _expected_successes(math.ceil(B), cfg.N, cfg.D)
    assert inner.mean <= cfg.M * (cfg.lam - weakest) + 3 * inner.stderr
    assert outer.mean <= cfg.M * cfg.lam + 3 * outer.stderr


def test_drift_probe_unvisited_region():
    with pytest.raises(InsufficientSamples):
        sim.drift_probe(_cfg(lam=0.0), samples=1000)
    with pytest.raises(DomainError):
        sim.drift_probe(_cfg(lam=1.0), samples=999)


# ---------------------------------------------------------------- complexity


def test_complexity_model_examples():
    assert sim.complexity_model(32, 8, 10) == 18944
    assert sim.complexity_model(32, 8, 10, c=1.0) == 8 * (1024 + 320)
    with pytest.raises(DomainError):
        sim.complexity_model(0, 8, 10)


def test_complexity_scales_quadratically_in_L():
    a, b = sim.complexity_model(32, 8, 10), sim.complexity_model(64, 8, 10)
    assert 2 < b / a < 4


# ---------------------------------------------------------------- PHY mode


def test_phy_step_small():
    cfg = SystemConfig(L=16, N=64, M=2, T=64, D=8, Kbar=32, lam=2.0, slots=30, seed=7)
    a = sim.run(cfg, "phy", warmup_slots=5)
    b = sim.run(cfg, "phy", warmup_slots=5, workers=2)
    assert [r.per_rb.tolist() for r in a.trace] == [r.per_rb.tolist() for r in b.trace]
    for r in a.trace:
        assert 0 <= r.successful <= r.transmitted
    assert a.throughput_per_rb == pytest.approx(2.0, rel=0.3)


def test_phy_rejects_mismatched_codebook():
    cfg = SystemConfig(L=16, N=64, M=2, T=64, D=8, Kbar=32, lam=1.0, slots=3)
    with pytest.raises(DomainError):
        sim.run(cfg, "phy", codebook=generate_codebook(16, 32, 0))


# ---------------------------------------------------------------- output


def test_trace_csv(tmp_path, run_12):
    path = tmp_path / "trace.csv"
    sim.write_trace_csv(run_12, path)
    with path.open() as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == sim.TRACE_COLUMNS
    assert len(rows) == 3001
    summary = sim.metrics_summary(run_12)
    assert summary["slots"] == 3000
