"""SNR back-off: efficiency and the rate-maximising back-off amount.

Scheduling at ``γ̂ - Δ`` instead of the noisy estimate ``γ̂ = γ + e`` trades
a smaller rate for a lower chance of exceeding the true channel.  The
optimum ``Δ*`` maximises ``ln(1 + γ̄_eq - Δ)·(1 - Q(Δ/σ_e))`` and is found
by bisection on the derivative condition

    (1 + γ̄_eq - Δ)/(√(2π) σ_e) · exp(-Δ²/(2σ_e²)) · ln(1 + γ̄_eq - Δ) + Q(Δ/σ_e) = 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError, NoRootError
from .specfun import q_function

_SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class BackoffSolution:
    delta: float
    efficiency: float
    residual: float
    bracket: tuple[float, float]


def backoff_efficiency(delta, sigma_e):
    """Probability ``1 - Q(Δ/σ_e)`` that the backed-off SNR is achievable."""
    if not sigma_e > 0:
        raise DomainError(f"sigma_e must be positive, got {sigma_e}")
    return 1.0 - q_function(np.divide(delta, sigma_e))


def stationarity_defect(delta: float, mean_snr: float, sigma_e: float) -> float:
    """Left side minus right side of the optimality condition (natural log)."""
    head = 1.0 + mean_snr - delta
    u = delta / sigma_e
    density = head / (_SQRT_2PI * sigma_e) * math.exp(-0.5 * u * u)
    return density * math.log(head) + q_function(u) - 1.0


def backoff_objective(delta, mean_snr: float, sigma_e: float):
    """``ln(1 + γ̄_eq - Δ)·(1 - Q(Δ/σ_e))``; vectorised over ``delta``."""
    delta = np.asarray(delta, dtype=float)
    return np.log1p(mean_snr - delta) * (1.0 - q_function(delta / sigma_e))


def solve_optimal_backoff(
    mean_snr: float, sigma_e: float, tol: float = 1e-10, xtol: float | None = None
) -> BackoffSolution:
    """Bisect the optimality condition on ``[ε, γ̄_eq]``.

    ``ε = 1e-12·min(γ̄_eq, σ_e)`` keeps the lower end off ``Δ = 0``.
    Iteration stops when ``|g| <= tol``, when the bracket is narrower than
    ``xtol`` or when it can no longer be split in floating point.

    Raises
    ------
    NoRootError
        If ``g`` has the same sign at both ends; the endpoint values are
        attached so a caller can fall back to ``Δ = 0``.
    """
    if not mean_snr > 0:
        raise DomainError(f"mean SNR must be positive, got {mean_snr}")
    if not sigma_e > 0:
        raise DomainError(f"sigma_e must be positive, got {sigma_e}")
    lo = 1e-12 * min(mean_snr, sigma_e)
    hi = float(mean_snr)
    g_lo = stationarity_defect(lo, mean_snr, sigma_e)
    g_hi = stationarity_defect(hi, mean_snr, sigma_e)
    if g_lo == 0:
        hi = lo
    elif g_hi == 0:
        lo = hi
    elif (g_lo > 0) == (g_hi > 0):
        raise NoRootError(
            f"no sign change on [{lo:g}, {hi:g}]: g={g_lo:g}, {g_hi:g}",
            lo, hi, g_lo, g_hi,
        )
    bracket = (lo, hi)
    mid, g_mid = lo, g_lo
    while lo < hi:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        g_mid = stationarity_defect(mid, mean_snr, sigma_e)
        if abs(g_mid) <= tol or (xtol is not None and hi - lo <= xtol):
            break
        if (g_mid > 0) == (g_lo > 0):
            lo, g_lo = mid, g_mid
        else:
            hi = mid
    return BackoffSolution(mid, float(backoff_efficiency(mid, sigma_e)), abs(g_mid), bracket)


def apply_backoff(estimate, delta):
    """Backed-off SNR ``max(γ̂ - Δ, 0)``."""
    out = np.maximum(np.asarray(estimate, dtype=float) - delta, 0.0)
    return float(out) if np.ndim(out) == 0 else out
