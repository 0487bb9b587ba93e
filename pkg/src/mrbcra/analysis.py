"""Closed-form steady-state and stability analysis of MRB-CRA with fast retrial.

Per-RB load is modelled as ``K ~ Pois(lambda1)`` with ``lambda1 = lambda + lambda2``.
Under the all-or-nothing detector model (at most ``D`` devices recovered, SC
collisions never resolved) the expected success count of an RB is

    h(lambda1) = lambda1 * exp(-lambda1 / N) * Q(D, lambda1 * (1 - 1/N))

where ``Q(D, x) = Gamma(D, x) / (D-1)!`` is the regularized upper incomplete
gamma function. Every quantity below is built from ``h``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import minimize_scalar

from .config import SystemConfig
from .errors import DomainError, NoSteadyState

__all__ = [
    "SteadyState",
    "CapacityReport",
    "regularized_upper_gamma",
    "unsuccessful_mean",
    "stability_bound",
    "success_rate",
    "collided_rate",
    "solve_lambda1",
    "lambda_max",
    "lambda_max_upper",
    "min_stable_N",
    "throughput_cra",
    "throughput_aloha",
    "cra_aloha_advantage",
    "drift_bound",
    "capacity_report",
]

# grid resolution for the maximiser scans, as a fraction of D
_GRID_STEP = 1e-3
_XTOL = 1e-8


@dataclass(frozen=True)
class SteadyState:
    """Poisson fixed point of the per-RB load for a given arrival rate.

    ``other_roots`` lists the larger (unstable) fixed points, if any were found.
    """

    lam: float
    lambda1: float
    lambda2: float
    nu1: float
    throughput: float
    delay: float
    other_roots: tuple = ()


@dataclass(frozen=True)
class CapacityReport:
    B_DN: float
    lambda_max: float
    lambda1_star: float
    lambda_max_upper: float
    N_star: int


def _check_D(D):
    if int(D) != D or D < 1:
        raise DomainError(f"D must be a positive integer, got {D!r}")
    return int(D)


def regularized_upper_gamma(D: int, x):
    """Gamma(D, x) / (D-1)! for integer ``D`` via the finite Poisson sum.

    ``Q(D, x) = exp(-x) * sum_{n<D} x**n / n!``, accumulated with the term
    recursion ``t_{n+1} = t_n * x / (n+1)`` so no factorial is formed. Accepts
    a scalar or an array ``x``.
    """
    D = _check_D(D)
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise DomainError("x must be nonnegative")
    term = np.exp(-arr)
    total = term.copy()
    for n in range(1, D):
        term = term * arr / n
        total = total + term
    total = np.minimum(total, 1.0)
    if np.ndim(x) == 0:
        return float(total)
    return total


def unsuccessful_mean(K: int, N: int, D: int) -> float:
    """Mean number of failed devices in an RB holding ``K`` devices.

    Above the threshold ``D`` everything fails; otherwise a device fails iff
    another device picked the same one of the ``N`` spreading codes.
    """
    if K <= 1:
        return 0.0
    if K > D:
        return float(K)
    return K - K * (1.0 - 1.0 / N) ** (K - 1)


def stability_bound(D: int, N: int) -> float:
    """B_{D,N} = D (1 - 1/N)^(D-1); arrivals per RB below it keep the backlog positive recurrent."""
    D = _check_D(D)
    if N < D:
        raise DomainError(f"stability bound needs D <= N, got D={D}, N={N}")
    return D * math.exp((D - 1) * math.log1p(-1.0 / N))


def success_rate(lambda1, N: int, D: int):
    """Expected successes per RB, h(lambda1), when the load is Pois(lambda1)."""
    lambda1 = np.asarray(lambda1, dtype=float)
    nu1 = lambda1 * (1.0 - 1.0 / N)
    out = lambda1 * np.exp(-lambda1 / N) * regularized_upper_gamma(D, nu1)
    return float(out) if out.ndim == 0 else out


def _upper_objective(lambda1, N: int, D: int):
    lambda1 = np.asarray(lambda1, dtype=float)
    out = lambda1 * regularized_upper_gamma(D, lambda1 * (1.0 - 1.0 / N))
    return float(out) if out.ndim == 0 else out


def collided_rate(lambda1: float, N: int, D: int) -> float:
    """lambda2 = lambda1 (1 - exp(-lambda1/N) Q(D, nu1)), the retransmission rate per RB."""
    if lambda1 < 0:
        raise DomainError("lambda1 must be nonnegative")
    if lambda1 == 0:
        return 0.0
    return max(0.0, lambda1 - success_rate(lambda1, N, D))


def throughput_cra(lambda1: float, N: int, D: int) -> float:
    """Mean successful packets per RB at load Pois(lambda1).

    Equals ``sum_{n<=D} P(K=n) n (1-1/N)^(n-1)``, which collapses to
    ``lambda1 e^{-lambda1} sum_{j<D} nu1^j / j!`` and never exceeds
    ``lambda1 e^{-lambda1/N}``.
    """
    if lambda1 < 0:
        raise DomainError("lambda1 must be nonnegative")
    return success_rate(lambda1, N, D)


def throughput_aloha(lam: float, L: int) -> float:
    """Multichannel ALOHA throughput per RB with L orthogonal channels."""
    return lam * math.exp(-lam / L)


def cra_aloha_advantage(eta: float) -> float:
    """Throughput ratio e^{-1/eta} / e^{-1} at the operating point Lambda1 ~ J."""
    if eta < 1:
        raise DomainError("eta must be >= 1")
    return math.exp(1.0 - 1.0 / eta)


def drift_bound(cfg: SystemConfig) -> float:
    """Upper bound M (lambda - B_{D,N}) on the Lyapunov drift inside the non-trivial region."""
    return cfg.M * (cfg.lam - stability_bound(cfg.D, cfg.N))


def _maximise(fn, N: int, D: int):
    """Global max of ``fn`` on [0, 2D+2]: dense grid, then golden section around the best cell."""
    step = _GRID_STEP * D
    hi = 2.0 * D + 2.0
    grid = np.arange(0.0, hi + step, step)
    values = fn(grid, N, D)
    i = int(np.argmax(values))
    if i == 0 or i == len(grid) - 1:
        return float(values[i]), float(grid[i])
    a, b, c = grid[i - 1], grid[i], grid[i + 1]
    res = minimize_scalar(
        lambda t: -fn(t, N, D),
        bracket=(a, b, c),
        method="golden",
        options={"xtol": _XTOL / max(b, 1.0)},
    )
    x = float(res.x)
    if not a <= x <= c or -res.fun < values[i]:
        return float(values[i]), float(b)
    return float(-res.fun), x


def _check_ND(N, D):
    D = _check_D(D)
    if int(N) != N or N < D:
        raise DomainError(f"need integer N >= D, got N={N!r}, D={D}")
    return int(N), D


@lru_cache(maxsize=4096)
def lambda_max(N: int, D: int) -> tuple[float, float]:
    """Largest arrival rate with a steady state, and the load lambda1* attaining it."""
    N, D = _check_ND(N, D)
    return _maximise(success_rate, N, D)


@lru_cache(maxsize=4096)
def lambda_max_upper(N: int, D: int) -> float:
    """Upper bound on lambda_max obtained by dropping the exp(-lambda1/N) factor."""
    N, D = _check_ND(N, D)
    return _maximise(_upper_objective, N, D)[0]


def _bisect(fn, lo, hi, tol, target):
    """Root of fn(x) = target on [lo, hi] where fn - target changes sign."""
    flo = fn(lo) - target
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fmid = fn(mid) - target
        if abs(fmid) < tol or hi - lo < 1e-15 * max(1.0, hi):
            return mid
        if (fmid < 0) == (flo < 0):
            lo, flo = mid, fmid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def solve_lambda1(lam: float, N: int, D: int, tol: float = 1e-12) -> SteadyState:
    """Smallest fixed point lambda1 of lambda1 = lam + lambda2(lambda1).

    Raises :class:`NoSteadyState` when ``lam`` exceeds :func:`lambda_max`.
    """
    if lam < 0 or tol <= 0:
        raise DomainError("lam must be nonnegative and tol positive")
    N, D = _check_ND(N, D)
    if lam == 0:
        return SteadyState(0.0, 0.0, 0.0, 0.0, 0.0, 1.0)
    lmax, star = lambda_max(N, D)
    if lam > lmax:
        raise NoSteadyState(f"lambda={lam} exceeds lambda_max={lmax:.6f} for N={N}, D={D}")

    def h(x):
        return success_rate(x, N, D)

    # first upward crossing of h = lam, located on a grid then bisected
    if lam >= lmax - tol:
        root = star
    else:
        grid = np.linspace(lam, star, 2001)
        above = np.nonzero(success_rate(grid, N, D) >= lam)[0]
        j = int(above[0])
        root = grid[0] if j == 0 else _bisect(h, grid[j - 1], grid[j], tol, lam)

    others = []
    if lam < lmax - tol:
        hi = max(2.0 * star, star + 1.0)
        while h(hi) >= lam:
            hi *= 2.0
        others.append(_bisect(h, star, hi, tol, lam))

    nu1 = root * (1.0 - 1.0 / N)
    thr = h(root)
    return SteadyState(
        lam=float(lam),
        lambda1=float(root),
        lambda2=float(root - thr),
        nu1=float(nu1),
        throughput=float(thr),
        delay=float(root / lam),
        other_roots=tuple(others),
    )


def _stable(N: int, D: int) -> bool:
    return lambda_max_upper(N, D) < stability_bound(D, N)


@lru_cache(maxsize=256)
def min_stable_N(D: int) -> int:
    """Smallest N >= D for which lambda_max_upper(N, D) < B_{D,N}.

    The predicate is monotone in N (the bound rises, the upper rate falls), so
    the search doubles then bisects. The analytic cap N >= D(D-1)/eps with
    eps = D - lambda_max_upper(D, D) bounds the search.
    """
    D = _check_D(D)
    if D <= 1:
        raise DomainError("min_stable_N needs D > 1")
    eps = D - lambda_max_upper(D, D)
    cap = max(D, math.ceil(D * (D - 1) / eps) + 1)
    if _stable(D, D):
        return D
    lo, hi = D, D
    while not _stable(hi, D):
        lo = hi
        hi = min(2 * hi, cap)
        if hi == lo:
            raise DomainError(f"no stable N found below the analytic cap {cap}")
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if _stable(mid, D):
            hi = mid
        else:
            lo = mid
    return hi


def capacity_report(N: int, D: int) -> CapacityReport:
    lmax, star = lambda_max(N, D)
    return CapacityReport(
        B_DN=stability_bound(D, N),
        lambda_max=lmax,
        lambda1_star=star,
        lambda_max_upper=lambda_max_upper(N, D),
        N_star=min_stable_N(D) if D > 1 else D,
    )
