"""Slot-level simulators for MRB-CRA with fast retrial and a multichannel ALOHA baseline.

Each slot runs the same skeleton:

1. Poisson arrivals per RB, dropped when the RB was over ``Kbar`` last slot.
2. Per-RB outcome: the abstract detector model (all fail above ``D``,
   otherwise only SC collisions fail), actual S-OMP detection on synthesized
   signals, or orthogonal-channel ALOHA.
3. Failed packets pick a fresh RB uniformly for the next slot.

Random draws come from streams keyed by (purpose, rb, slot) so per-RB work
can run in any order, or on a thread pool, with identical results.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import analysis
from .config import SystemConfig, derive_stream
from .csmud import DEFAULT_STOP_FACTOR, Codebook, evaluate_recovery, generate_codebook, somp_recover, synthesize_rb
from .errors import DomainError, InsufficientSamples

__all__ = [
    "BacklogState",
    "SlotRecord",
    "RunMetrics",
    "initial_state",
    "step_abstract",
    "step_phy",
    "step_aloha",
    "run",
    "run_aloha",
    "drift_probe",
    "complexity_model",
    "default_warmup",
    "write_trace_csv",
    "metrics_summary",
]


@dataclass
class BacklogState:
    """Packets pending transmission at the start of slot ``slot``.

    Packet arrays are aligned and sorted by id. ``rb`` is the RB each pending
    packet will use; ``blocked`` holds the rate-control flags broadcast at the
    start of the slot (computed from the previous slot's loads).
    """

    slot: int
    M: int
    pkt_id: np.ndarray
    arrival: np.ndarray
    attempts: np.ndarray
    rb: np.ndarray
    blocked: np.ndarray
    last_K: np.ndarray
    next_id: int = 0

    @property
    def per_rb_pending(self) -> np.ndarray:
        return np.bincount(self.rb, minlength=self.M)

    @property
    def total(self) -> int:
        return len(self.pkt_id)


@dataclass
class SlotRecord:
    slot: int
    arrivals_offered: int
    arrivals_admitted: int
    arrivals_blocked: int
    transmitted: int
    successful: int
    collided_or_failed: int
    per_rb: np.ndarray  # columns: K_m, successes, failures
    rate_control_active: int
    backlog: int
    delivered_delay_sum: int = 0


@dataclass
class RunMetrics:
    mean_K_per_rb: float
    throughput_per_rb: float
    normalized_delay: float
    mean_packet_delay_slots: float
    blocked_fraction: float
    mean_transmitted_per_rb: float
    warmup_slots: int
    trace: list = field(default_factory=list, repr=False)


def initial_state(M: int) -> BacklogState:
    empty = np.zeros(0, dtype=np.int64)
    return BacklogState(
        slot=0,
        M=M,
        pkt_id=empty,
        arrival=empty.copy(),
        attempts=empty.copy(),
        rb=empty.copy(),
        blocked=np.zeros(M, dtype=bool),
        last_K=np.zeros(M, dtype=np.int64),
    )


def _admit_arrivals(state: BacklogState, cfg: SystemConfig):
    """Draw per-RB Poisson arrivals and append the admitted ones as new packets."""
    q, M = state.slot, state.M
    offered = np.zeros(M, dtype=np.int64)
    for m in range(M):
        if cfg.lam > 0:
            offered[m] = derive_stream(cfg.seed, "arrivals", m, q).poisson(cfg.lam)
    admitted = np.where(state.blocked, 0, offered)
    n_new = int(admitted.sum())
    if n_new:
        ids = np.arange(state.next_id, state.next_id + n_new, dtype=np.int64)
        state.pkt_id = np.concatenate([state.pkt_id, ids])
        state.arrival = np.concatenate([state.arrival, np.full(n_new, q, dtype=np.int64)])
        state.attempts = np.concatenate([state.attempts, np.zeros(n_new, dtype=np.int64)])
        state.rb = np.concatenate([state.rb, np.repeat(np.arange(M, dtype=np.int64), admitted)])
        state.next_id += n_new
    return offered, admitted


def _abstract_outcome(cfg: SystemConfig, K: int, rng: np.random.Generator) -> np.ndarray:
    """Success mask for K packets of one RB under the threshold/collision model."""
    scs = rng.integers(0, cfg.N, size=K)
    if K > cfg.D:
        return np.zeros(K, dtype=bool)
    return np.bincount(scs, minlength=cfg.N)[scs] == 1


def _aloha_outcome(cfg: SystemConfig, K: int, rng: np.random.Generator) -> np.ndarray:
    ch = rng.integers(0, cfg.L, size=K)
    return np.bincount(ch, minlength=cfg.L)[ch] == 1


def _phy_outcome(cfg, codebook, K, rng, stop_factor):
    if K == 0:
        return np.zeros(0, dtype=bool)
    scs = rng.integers(0, cfg.N, size=K)
    obs = synthesize_rb(cfg, codebook, list(enumerate(scs)), rng)
    res = somp_recover(obs.Y, codebook, cfg.L - 1, stop_factor, obs.noise_var)
    _, ok = evaluate_recovery(obs, res)
    mask = np.zeros(K, dtype=bool)
    mask[list(ok)] = True
    return mask


def _finish_slot(state, cfg, offered, admitted, transmit_mask, outcome, purpose):
    """Apply per-RB outcomes: deliver successes, reroute failures, update flags.

    ``transmit_mask`` marks pending packets that actually transmitted;
    ``outcome`` is a list over RBs of success masks for the transmitting
    packets of that RB in id order.
    """
    q, M = state.slot, state.M
    success = np.zeros(state.total, dtype=bool)
    failed = np.zeros(state.total, dtype=bool)
    per_rb = np.zeros((M, 3), dtype=np.int64)
    new_rb = state.rb.copy()
    for m in range(M):
        idx = np.nonzero((state.rb == m) & transmit_mask)[0]
        ok = outcome[m]
        success[idx[ok]] = True
        bad = idx[~ok]
        failed[bad] = True
        if len(bad):
            new_rb[bad] = derive_stream(cfg.seed, purpose, m, q).integers(0, M, size=len(bad))
        per_rb[m] = (len(idx), int(ok.sum()), len(bad))

    pending_K = state.per_rb_pending
    n_blocked = int(state.blocked.sum())
    state.attempts = state.attempts + transmit_mask
    delay_sum = int((q - state.arrival[success] + 1).sum())
    keep = ~success
    state.pkt_id = state.pkt_id[keep]
    state.arrival = state.arrival[keep]
    state.attempts = state.attempts[keep]
    state.rb = new_rb[keep]
    state.blocked = pending_K > cfg.Kbar
    state.last_K = pending_K
    state.slot = q + 1

    n_off, n_adm = int(offered.sum()), int(admitted.sum())
    return SlotRecord(
        slot=q,
        arrivals_offered=n_off,
        arrivals_admitted=n_adm,
        arrivals_blocked=n_off - n_adm,
        transmitted=int(per_rb[:, 0].sum()),
        successful=int(per_rb[:, 1].sum()),
        collided_or_failed=int(per_rb[:, 2].sum()),
        per_rb=per_rb,
        rate_control_active=n_blocked,
        backlog=int(pending_K.sum()),
        delivered_delay_sum=delay_sum,
    )


def _map_rbs(fn, M, workers):
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, range(M)))
    return [fn(m) for m in range(M)]


def step_abstract(state: BacklogState, cfg: SystemConfig, workers: int = 0):
    """Advance one slot under the abstract detector model. Mutates and returns ``state``."""
    offered, admitted = _admit_arrivals(state, cfg)
    K = state.per_rb_pending
    q = state.slot

    def outcome(m):
        return _abstract_outcome(cfg, int(K[m]), derive_stream(cfg.seed, "detect", m, q))

    res = _map_rbs(outcome, state.M, workers)
    transmit = np.ones(state.total, dtype=bool)
    return state, _finish_slot(state, cfg, offered, admitted, transmit, res, "retrial")


def step_phy(
    state: BacklogState,
    cfg: SystemConfig,
    codebook: Codebook,
    workers: int = 0,
    stop_factor: float = DEFAULT_STOP_FACTOR,
):
    """Advance one slot, deciding each RB's successes by S-OMP on a synthesized block."""
    if codebook.L != cfg.L or codebook.N != cfg.N:
        raise DomainError("codebook dimensions do not match the config")
    offered, admitted = _admit_arrivals(state, cfg)
    K = state.per_rb_pending
    q = state.slot

    def outcome(m):
        return _phy_outcome(cfg, codebook, int(K[m]), derive_stream(cfg.seed, "detect", m, q), stop_factor)

    res = _map_rbs(outcome, state.M, workers)
    transmit = np.ones(state.total, dtype=bool)
    return state, _finish_slot(state, cfg, offered, admitted, transmit, res, "retrial")


def step_aloha(state: BacklogState, cfg: SystemConfig, control: bool = True):
    """One slot of multichannel ALOHA with L orthogonal channels per RB.

    With ``control`` every pending packet transmits with probability
    ``min(1, J / n)`` where ``n`` is the total population; deferred packets
    stay on their RB. Collided packets re-draw their RB like fast retrial.
    """
    offered, admitted = _admit_arrivals(state, cfg)
    q, M = state.slot, state.M
    n = state.total
    p = min(1.0, cfg.J / n) if (control and n) else 1.0
    transmit = np.zeros(n, dtype=bool)
    res = []
    for m in range(M):
        idx = np.nonzero(state.rb == m)[0]
        rng = derive_stream(cfg.seed, "aloha", m, q)
        go = rng.random(len(idx)) < p if p < 1.0 else np.ones(len(idx), dtype=bool)
        transmit[idx[go]] = True
        res.append(_aloha_outcome(cfg, int(go.sum()), rng))
    return state, _finish_slot(state, cfg, offered, admitted, transmit, res, "aloha-retrial")


def default_warmup(slots: int) -> int:
    return min(max(200, slots // 10), slots - 1)


def _summarise(trace, M, warmup) -> RunMetrics:
    post = trace[warmup:]
    n = len(post)
    backlog = sum(r.backlog for r in post)
    sent = sum(r.transmitted for r in post)
    ok = sum(r.successful for r in post)
    offered = sum(r.arrivals_offered for r in post)
    blocked = sum(r.arrivals_blocked for r in post)
    delay_sum = sum(r.delivered_delay_sum for r in post)
    # nothing delivered: delay is unbounded if packets are waiting, trivially 1 if none are
    stuck = math.inf if backlog else 1.0
    return RunMetrics(
        mean_K_per_rb=backlog / (n * M),
        throughput_per_rb=ok / (n * M),
        normalized_delay=backlog / ok if ok else stuck,
        mean_packet_delay_slots=delay_sum / ok if ok else stuck,
        blocked_fraction=blocked / offered if offered else 0.0,
        mean_transmitted_per_rb=sent / (n * M),
        warmup_slots=warmup,
        trace=trace,
    )


def run(
    cfg: SystemConfig,
    mode: str = "abstract",
    warmup_slots: int | None = None,
    workers: int = 0,
    codebook: Codebook | None = None,
    stop_factor: float = DEFAULT_STOP_FACTOR,
) -> RunMetrics:
    """Simulate ``cfg.slots`` slots of MRB-CRA from an empty system.

    ``mode`` is ``"abstract"`` (threshold/collision detector model) or
    ``"phy"`` (S-OMP on synthesized signals). Statistics skip the first
    ``warmup_slots`` slots; the trace keeps all of them.
    """
    if mode not in ("abstract", "phy"):
        raise DomainError(f"unknown mode {mode!r}")
    warmup = default_warmup(cfg.slots) if warmup_slots is None else warmup_slots
    if not 0 <= warmup < cfg.slots:
        raise DomainError("need 0 <= warmup_slots < slots")
    if mode == "phy" and codebook is None:
        codebook = generate_codebook(cfg.L, cfg.N, cfg.seed)
    state = initial_state(cfg.M)
    trace = []
    for _ in range(cfg.slots):
        if mode == "abstract":
            state, rec = step_abstract(state, cfg, workers)
        else:
            state, rec = step_phy(state, cfg, codebook, workers, stop_factor)
        trace.append(rec)
    return _summarise(trace, cfg.M, warmup)


def run_aloha(cfg: SystemConfig, control: bool = True, warmup_slots: int | None = None) -> RunMetrics:
    warmup = default_warmup(cfg.slots) if warmup_slots is None else warmup_slots
    state = initial_state(cfg.M)
    trace = []
    for _ in range(cfg.slots):
        state, rec = step_aloha(state, cfg, control)
        trace.append(rec)
    return _summarise(trace, cfg.M, warmup)


@dataclass
class DriftEstimate:
    region: str
    mean: float
    stderr: float
    count: int


def drift_probe(cfg: SystemConfig, mode: str = "abstract", samples: int = 1000, warmup_slots: int = 0):
    """Empirical one-step drift of V(q) = sum_m K_m(q), split by region.

    ``interior`` is the set where every RB satisfies B_{D,N} <= K_m <= D; the
    rest is ``complement``. Returns a dict of :class:`DriftEstimate`.
    Raises :class:`InsufficientSamples` if a region was never visited.
    """
    if samples < 1000:
        raise DomainError("drift_probe needs samples >= 1000")
    cfg = cfg.replace(slots=samples + warmup_slots + 1)
    metrics = run(cfg, mode, warmup_slots=0)
    B = analysis.stability_bound(cfg.D, cfg.N)
    V = np.array([r.backlog for r in metrics.trace], dtype=float)
    K = np.array([r.per_rb[:, 0] for r in metrics.trace])
    inside = np.all((K >= B) & (K <= cfg.D), axis=1)
    dV = V[1:] - V[:-1]
    inside = inside[:-1]
    sl = slice(warmup_slots, None)
    dV, inside = dV[sl], inside[sl]
    out = {}
    for name, mask in (("interior", inside), ("complement", ~inside)):
        vals = dV[mask]
        if len(vals) == 0:
            raise InsufficientSamples(f"region {name!r} never visited in {len(dV)} slots")
        se = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else float("inf")
        out[name] = DriftEstimate(name, float(vals.mean()), se, len(vals))
    return out


def complexity_model(L: float, M: float, eta: float, c: float = 2.0) -> float:
    """Receiver cost M (c L^2 + eta L) of running one S-OMP detector per RB."""
    if min(L, M, eta, c) <= 0:
        raise DomainError("complexity_model arguments must be positive")
    return M * (c * L * L + eta * L)


TRACE_COLUMNS = [
    "slot",
    "arrivals_offered",
    "arrivals_admitted",
    "transmitted",
    "successful",
    "blocked_rbs",
    "total_backlog",
]


def write_trace_csv(metrics: RunMetrics, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for r in metrics.trace:
            w.writerow(
                [r.slot, r.arrivals_offered, r.arrivals_admitted, r.transmitted, r.successful, r.rate_control_active, r.backlog]
            )


def metrics_summary(metrics: RunMetrics) -> dict:
    return {
        "mean_K_per_rb": metrics.mean_K_per_rb,
        "throughput_per_rb": metrics.throughput_per_rb,
        "normalized_delay": metrics.normalized_delay,
        "mean_packet_delay_slots": metrics.mean_packet_delay_slots,
        "blocked_fraction": metrics.blocked_fraction,
        "mean_transmitted_per_rb": metrics.mean_transmitted_per_rb,
        "warmup_slots": metrics.warmup_slots,
        "slots": len(metrics.trace),
    }
