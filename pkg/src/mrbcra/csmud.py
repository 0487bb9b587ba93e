"""Per-RB signal synthesis and S-OMP multiuser detection.

One RB observes ``Y = C S + W`` over ``T`` symbols, where ``C`` is the shared
L x N spreading codebook and row ``n`` of ``S`` aggregates the (power
controlled, unit-magnitude) symbols of every device that picked code ``n``.
The detector recovers the row support of ``S`` with simultaneous orthogonal
matching pursuit; a device is decoded iff it alone chose its code and that
code is in the recovered support.
"""

from __future__ import annotations

import csv
import warnings
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analysis import unsuccessful_mean
from .config import SystemConfig, derive_stream
from .errors import DomainError, IllConditioned, InsufficientData

__all__ = [
    "Codebook",
    "RbObservation",
    "RecoveryResult",
    "generate_codebook",
    "synthesize_rb",
    "somp_recover",
    "evaluate_recovery",
    "empirical_unsuccessful_curve",
    "estimate_D",
    "write_curve_csv",
    "DEFAULT_STOP_FACTOR",
]

DEFAULT_STOP_FACTOR = 1.2
_MAX_GRAM_COND = 1e12


@dataclass(frozen=True)
class Codebook:
    entries: np.ndarray
    seed: int

    @property
    def L(self) -> int:
        return self.entries.shape[0]

    @property
    def N(self) -> int:
        return self.entries.shape[1]


@dataclass
class RbObservation:
    """Received block of one RB together with the ground truth that produced it."""

    Y: np.ndarray
    truth_assignments: list
    S_true: np.ndarray
    noise: np.ndarray
    noise_var: float


@dataclass
class RecoveryResult:
    support: list
    S_hat: np.ndarray
    iterations: int
    residual_energy: float
    residual_history: list = field(default_factory=list)
    ill_conditioned: bool = False


def _cscg(rng: np.random.Generator, shape, var: float) -> np.ndarray:
    scale = np.sqrt(var / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def generate_codebook(L: int, N: int, seed: int) -> Codebook:
    """Draw C with iid CN(0, 1/L) entries from the ``codebook`` stream of ``seed``."""
    if not 1 <= L <= N:
        raise DomainError(f"codebook needs 1 <= L <= N, got L={L}, N={N}")
    rng = derive_stream(seed, "codebook")
    return Codebook(entries=_cscg(rng, (L, N), 1.0 / L), seed=seed)


def synthesize_rb(
    cfg: SystemConfig,
    codebook: Codebook,
    active,
    rng: np.random.Generator,
    noise_var: float | None = None,
) -> RbObservation:
    """Build Y = C S + W for the devices in ``active`` (pairs of device id, SC index).

    Each device contributes a unit-magnitude term with an independent uniform
    phase per symbol; channel phase is absorbed in that phase. ``noise_var``
    defaults to the config's N0.
    """
    L, N, T = codebook.L, codebook.N, cfg.T
    if noise_var is None:
        noise_var = cfg.noise_var
    active = [(dev, int(sc)) for dev, sc in active]
    for _, sc in active:
        if not 0 <= sc < N:
            raise DomainError(f"SC index {sc} out of range [0, {N})")
    S = np.zeros((N, T), dtype=complex)
    if active:
        phases = rng.uniform(0.0, 2.0 * np.pi, size=(len(active), T))
        symbols = np.exp(1j * phases)
        np.add.at(S, [sc for _, sc in active], symbols)
    noise = _cscg(rng, (L, T), noise_var) if noise_var > 0 else np.zeros((L, T), dtype=complex)
    Y = codebook.entries @ S + noise
    return RbObservation(Y=Y, truth_assignments=active, S_true=S, noise=noise, noise_var=noise_var)


def somp_recover(
    Y: np.ndarray,
    codebook: Codebook,
    max_sparsity: int,
    stop_factor: float = DEFAULT_STOP_FACTOR,
    noise_var: float = 0.0,
) -> RecoveryResult:
    """Joint-sparse recovery of the row support of S from Y = C S + W.

    Each iteration picks the code maximising ``sum_t |c_n^H r_t|`` over the
    current residual, appends it to a QR factorisation of the selected
    columns, and projects Y off their span. Iteration stops once the support
    holds ``max_sparsity`` codes or the residual energy falls to
    ``stop_factor * L * T * noise_var``.
    """
    C = codebook.entries
    L, N = C.shape
    if Y.shape[0] != L:
        raise DomainError(f"Y has {Y.shape[0]} rows, codebook has L={L}")
    if not 1 <= max_sparsity <= L - 1:
        raise DomainError(f"max_sparsity must lie in [1, {L - 1}]")
    T = Y.shape[1]
    floor = stop_factor * L * T * noise_var
    CH = C.conj().T

    Q = np.zeros((L, max_sparsity), dtype=complex)
    Rtri = np.zeros((max_sparsity, max_sparsity), dtype=complex)
    support: list[int] = []
    chosen = np.zeros(N, dtype=bool)
    resid = Y.copy()
    energy = float(np.vdot(resid, resid).real)
    history = [energy]
    # round-off floor so noiseless blocks stop once Y is fully explained
    floor = max(floor, 1e-20 * energy)
    ill = False
    # correlations C^H R, kept current by rank-one downdates
    corr = CH @ resid

    while len(support) < max_sparsity and energy > floor:
        scores = np.abs(corr).sum(axis=1)
        scores[chosen] = -np.inf
        n = int(np.argmax(scores))
        k = len(support)

        # Gram-Schmidt with one re-orthogonalisation pass
        v = C[:, n].copy()
        r = np.zeros(k + 1, dtype=complex)
        for _ in range(2):
            proj = Q[:, :k].conj().T @ v
            v -= Q[:, :k] @ proj
            r[:k] += proj
        r[k] = np.linalg.norm(v)
        Rtri[: k + 1, k] = r
        sv = np.linalg.svd(Rtri[: k + 1, : k + 1], compute_uv=False)
        if sv[-1] == 0 or (sv[0] / sv[-1]) ** 2 > _MAX_GRAM_COND:
            Rtri[: k + 1, k] = 0
            ill = True
            warnings.warn(f"S-OMP stopped at {k} columns: Gram matrix ill-conditioned", IllConditioned)
            break
        Q[:, k] = v / r[k]
        support.append(n)
        chosen[n] = True
        # Y - Q Q^H Y, updated with the new direction only
        coef = Q[:, k].conj() @ resid
        resid = resid - np.outer(Q[:, k], coef)
        corr -= np.outer(CH @ Q[:, k], coef)
        energy = float(np.vdot(resid, resid).real)
        history.append(energy)

    k = len(support)
    S_hat = np.zeros((N, T), dtype=complex)
    if k:
        coef = np.linalg.solve(Rtri[:k, :k], Q[:, :k].conj().T @ Y)
        S_hat[support] = coef
    return RecoveryResult(
        support=support,
        S_hat=S_hat,
        iterations=k,
        residual_energy=energy,
        residual_history=history,
        ill_conditioned=ill,
    )


def evaluate_recovery(truth: RbObservation, result: RecoveryResult):
    """Return (number of failed devices, set of decoded device ids)."""
    counts = Counter(sc for _, sc in truth.truth_assignments)
    detected = set(result.support)
    ok = {dev for dev, sc in truth.truth_assignments if counts[sc] == 1 and sc in detected}
    return len(truth.truth_assignments) - len(ok), ok


def _trial_rng(seed: int, K: int, trial: int) -> np.random.Generator:
    return derive_stream(seed, "mud-curve", rb=K, slot=trial)


def empirical_unsuccessful_curve(
    L: int,
    N: int,
    T: int,
    snr_db: float,
    K_range,
    trials: int,
    seed: int,
    stop_factor: float = DEFAULT_STOP_FACTOR,
    max_sparsity: int | None = None,
):
    """Monte Carlo mean failure count U(K) of S-OMP detection.

    Every trial redraws the codebook, the uniform SC choices of the ``K``
    devices and the noise. Returns a list of ``(K, mean, stderr, trials)``.
    """
    if trials < 1:
        raise DomainError("trials must be >= 1")
    if max_sparsity is None:
        max_sparsity = L - 1
    D_dummy = max(1, min(L - 1, max_sparsity))
    cfg = SystemConfig(L=L, N=N, M=1, T=T, D=D_dummy, Kbar=D_dummy + 1, snr_db=snr_db, seed=seed)
    rows = []
    for K in K_range:
        fails = np.empty(trials)
        for trial in range(trials):
            rng = _trial_rng(seed, K, trial)
            C = _cscg(rng, (L, N), 1.0 / L)
            codebook = Codebook(entries=C, seed=seed)
            scs = rng.integers(0, N, size=K)
            obs = synthesize_rb(cfg, codebook, list(enumerate(scs)), rng)
            res = somp_recover(obs.Y, codebook, max_sparsity, stop_factor, obs.noise_var)
            fails[trial] = evaluate_recovery(obs, res)[0]
        se = float(fails.std(ddof=1) / np.sqrt(trials)) if trials > 1 else 0.0
        rows.append((int(K), float(fails.mean()), se, trials))
    return rows


def estimate_D(curve, N: int, slack: float = 0.1) -> int:
    """Largest K whose measured U(K) stays within ``slack * K`` of the collision-only value."""
    if len(curve) < 3:
        raise InsufficientData("need at least 3 curve points to estimate D")
    best = None
    for row in curve:
        K, mean_u = int(row[0]), float(row[1])
        collision_only = unsuccessful_mean(K, N, K)
        if mean_u <= collision_only + slack * K:
            best = K if best is None else max(best, K)
    if best is None:
        raise InsufficientData("no curve point is consistent with the collision-only model")
    return best


def write_curve_csv(curve, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["K", "mean_unsuccessful", "stderr", "trials"])
        for K, mean_u, se, n in curve:
            w.writerow([K, repr(float(mean_u)), repr(float(se)), n])
