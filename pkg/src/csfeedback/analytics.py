"""Closed-form performance of the scheduled link.

The end-to-end SNR is ``γ_eq = min(X, γ*)`` with ``X = |f|²/λ`` the
first-hop SINR (Gamma law scaled by ``λ = (Pr ρ² + N0)/Ps``) and ``γ*`` the
largest of ``N`` exponential user SNRs.  Its mean splits as ``μ₁ + μ₂``:

    μ₁ = N (λ/θ)^d d(d+1) / (2γ̄) · Σ_{n=0}^{N-1} C(N-1, n) (-1)^n
           (λ/θ + (n+1)/γ̄)^(-d-2) ₂F₁(1, d+2; 3; z_n),
           z_n = ((n+1)/γ̄) / (λ/θ + (n+1)/γ̄)
    μ₂ = d (λ/θ)^d · Σ_{n=1}^{N} C(N, n) (-1)^(n+1) (λ/θ + n/γ̄)^(-d-1)

The alternating binomial sums cancel catastrophically in double precision
once ``N`` reaches a few tens, so by default they are summed in
``gmpy2.mpfr`` with a working precision raised until the observed
cancellation leaves at least 64 good bits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import gmpy2
import numpy as np
from scipy import integrate

from .channels import NetworkParams
from .exceptions import DomainError, NumericalInstabilityError
from .feedback import expected_feedback_users, measurement_budget
from .specfun import SeriesTolerance, gamma_q, gauss_2f1, q_function

CLOSED_FORM_MAX_USERS = 200
_GOOD_BITS = 64


@dataclass(frozen=True)
class AnalyticInputs:
    """Parameters of the closed-form expressions.

    ``lam`` is the first-hop interference-plus-noise normalised by ``Ps``;
    ``tau`` is the mini-slot duration as a fraction of the coherence time.
    """

    n_users: int
    mean_snr: float
    d: float
    theta: float
    lam: float
    outage_prob: float = 0.01
    C: float = 2.0
    J: int = 3
    tau: float = 1.0 / 600.0

    def __post_init__(self):
        if self.n_users < 1:
            raise DomainError(f"n_users must be >= 1, got {self.n_users}")
        if not self.lam > 0:
            raise DomainError(f"lambda must be positive, got {self.lam}")
        if not 0 < self.tau < 1:
            raise DomainError(f"tau must lie in (0, 1), got {self.tau}")

    @classmethod
    def from_params(cls, params: NetworkParams, outage_prob=0.01, C=2.0, tau=1.0 / 600.0):
        return cls(
            n_users=params.n_users,
            mean_snr=params.mean_user_snr,
            d=params.nakagami_d,
            theta=params.nakagami_theta,
            lam=params.first_hop_interference,
            outage_prob=outage_prob,
            C=C,
            J=params.truncation_order,
            tau=tau,
        )


def _best_user_survival(x, n, mean_snr):
    # 1 - (1 - e^{-x/γ̄})^N without cancellation
    if x <= 0:
        return 1.0
    return -math.expm1(n * math.log1p(-math.exp(-x / mean_snr)))


def _first_hop_survival(x, inp):
    return gamma_q(inp.d, inp.lam * x / inp.theta)


def _vectorize(fn):
    vec = np.vectorize(fn, otypes=[float], excluded={1})

    def wrapper(x, inputs):
        if np.ndim(x) == 0:
            return fn(float(x), inputs)
        return vec(np.asarray(x, dtype=float), inputs)

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


@_vectorize
def equivalent_snr_cdf(x, inputs: AnalyticInputs):
    """``F(x) = 1 - [1 - P(d, λx/θ)]·[1 - (1 - e^(-x/γ̄))^N]``."""
    if x <= 0:
        return 0.0
    return 1.0 - _first_hop_survival(x, inputs) * _best_user_survival(
        x, inputs.n_users, inputs.mean_snr
    )


@_vectorize
def equivalent_snr_pdf(x, inputs: AnalyticInputs):
    """Density ``G₁(x) + G₂(x)`` of the end-to-end SNR."""
    if x < 0:
        return 0.0
    N, g, d, theta, lam = inputs.n_users, inputs.mean_snr, inputs.d, inputs.theta, inputs.lam
    e = math.exp(-x / g)
    g1 = N / g * e * (1.0 - e) ** (N - 1) * _first_hop_survival(x, inputs)
    if x == 0:
        gamma_density = lam / theta if d == 1 else (0.0 if d > 1 else math.inf)
    else:
        gamma_density = math.exp(
            d * math.log(lam / theta) + (d - 1.0) * math.log(x) - lam * x / theta - math.lgamma(d)
        )
    g2 = _best_user_survival(x, N, g) * gamma_density
    return g1 + g2


_SERIES_MAX_Z = 0.9


def _hyp_one_b_three(b, z, tol):
    """``₂F₁(1, b; 3; z)`` in whatever arithmetic ``b`` and ``z`` carry.

    The power series needs on the order of ``b/(1-z)`` terms, so close to
    ``z = 1`` the elementary form
    ``2[(1-z)^(2-b) - 1 + (2-b)z] / ((b-1)(b-2)z²)`` is used instead; it
    cancels badly for small ``z``, where the series is cheap.
    """
    if z <= _SERIES_MAX_Z or b == 1 or b == 2:
        return gauss_2f1(1, b, 3, z, tol)
    return 2 * ((1 - z) ** (2 - b) - 1 + (2 - b) * z) / ((b - 1) * (b - 2) * z * z)


def _closed_form_sums(inp: AnalyticInputs, bits: int | None):
    """``(μ₁, μ₂, lost_bits)``; ``bits=None`` sums in double precision."""
    N = inp.n_users
    if bits is None:
        num = float
        tol = SeriesTolerance(rel_tol=1e-15, max_terms=10**7)
    else:
        num = gmpy2.mpfr
        tol = SeriesTolerance(rel_tol=gmpy2.mpfr(2) ** (16 - bits), max_terms=10**8)
    d, theta, lam, g = num(inp.d), num(inp.theta), num(inp.lam), num(inp.mean_snr)
    r = lam / theta

    s1 = num(0)
    abs1 = num(0)
    for n in range(N):
        rate = num(n + 1) / g
        base = r + rate
        term = num(math.comb(N - 1, n)) * base ** (-d - 2) * _hyp_one_b_three(d + 2, rate / base, tol)
        if n % 2:
            term = -term
        s1 += term
        abs1 += abs(term)
    mu1 = N * r ** d * d * (d + 1) / (2 * g) * s1

    s2 = num(0)
    abs2 = num(0)
    for n in range(1, N + 1):
        term = num(math.comb(N, n)) * (r + num(n) / g) ** (-d - 1)
        if n % 2 == 0:
            term = -term
        s2 += term
        abs2 += abs(term)
    mu2 = d * r ** d * s2

    lost = max(
        math.log2(float(abs1 / abs(s1))) if s1 else math.inf,
        math.log2(float(abs2 / abs(s2))) if s2 else math.inf,
    )
    return float(mu1), float(mu2), lost


@lru_cache(maxsize=256)
def _extended_sums(inp: AnalyticInputs):
    bits = 96 + inp.n_users
    while True:
        with gmpy2.context(gmpy2.get_context(), precision=bits):
            mu1, mu2, lost = _closed_form_sums(inp, bits)
        if bits - lost >= _GOOD_BITS:
            return mu1, mu2
        bits = int(lost) + _GOOD_BITS + 32


def mean_components(inputs: AnalyticInputs, extended_precision: bool = True):
    """Return ``(μ₁, μ₂)`` from the closed-form binomial sums.

    Raises
    ------
    NumericalInstabilityError
        In double precision, when the cancellation bound
        ``eps·Σ|t|/|Σt|`` exceeds ``1e-6``.
    """
    if not inputs.d > 1:
        raise DomainError(f"closed form requires d > 1, got {inputs.d}")
    if extended_precision:
        return _extended_sums(inputs)
    mu1, mu2, lost = _closed_form_sums(inputs, None)
    if 2.0 ** (lost - 52) > 1e-6:
        raise NumericalInstabilityError(
            f"alternating sums lose {lost:.0f} of 53 bits at N={inputs.n_users}"
        )
    return mu1, mu2


def _breakpoints(inp: AnalyticInputs):
    harmonic = sum(1.0 / k for k in range(1, inp.n_users + 1))
    best = inp.mean_snr * harmonic
    first = inp.d * inp.theta / inp.lam
    spread = math.sqrt(inp.d) * inp.theta / inp.lam
    upper = min(inp.mean_snr * (math.log(inp.n_users) + 60.0), first + 60.0 * spread + 60.0 * inp.theta / inp.lam)
    pts = sorted(p for p in {best, first, 0.5 * best, 0.5 * first} if 0 < p < upper)
    return pts, upper


def mean_by_quadrature(inputs: AnalyticInputs) -> float:
    """``E[γ_eq] = ∫₀^∞ (1 - F(x)) dx`` by adaptive quadrature."""
    pts, upper = _breakpoints(inputs)

    def survival(x):
        return _first_hop_survival(x, inputs) * _best_user_survival(x, inputs.n_users, inputs.mean_snr)

    edges = [0.0, *pts, upper]
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        total += integrate.quad(survival, a, b, epsabs=0.0, epsrel=1e-12, limit=400)[0]
    total += integrate.quad(survival, upper, np.inf, epsabs=0.0, epsrel=1e-10, limit=200)[0]
    return total


def mean_equivalent_snr(
    inputs: AnalyticInputs, method: str = "auto", extended_precision: bool = True
) -> float:
    """Mean end-to-end SNR of the strongest user.

    ``method`` is ``"closed"`` (binomial sums), ``"quadrature"`` or
    ``"auto"``, which uses the closed form up to
    ``CLOSED_FORM_MAX_USERS`` users and quadrature beyond.
    """
    if method == "auto":
        method = "closed" if inputs.n_users <= CLOSED_FORM_MAX_USERS else "quadrature"
    if method == "closed":
        mu1, mu2 = mean_components(inputs, extended_precision)
        return mu1 + mu2
    if method == "quadrature":
        return mean_by_quadrature(inputs)
    raise ValueError(f"unknown method {method!r}")


def rate_upper_bound(mean_snr, delta, sigma_e, outage_prob, log_base=2.0):
    """Jensen bound ``log(1 + γ̄_eq - Δ)(1 - P_o)(1 - Q(Δ/σ_e))``."""
    if delta >= mean_snr:
        raise DomainError(f"back-off {delta} must be below the mean SNR {mean_snr}")
    if not 0 <= outage_prob <= 1:
        raise DomainError(f"outage probability must lie in [0, 1], got {outage_prob}")
    log = math.log1p(mean_snr - delta)
    if log_base is not None and log_base != math.e:
        log /= math.log(log_base)
    return log * (1.0 - outage_prob) * (1.0 - q_function(delta / sigma_e))


def feedback_load(n_users, outage_prob, C, J, mode, log_base=None, allow_degenerate=False) -> int:
    """Feedback mini-slots of the CS scheme at the mean sparsity ``S̄``."""
    s_bar = expected_feedback_users(n_users, outage_prob)
    return measurement_budget(n_users, s_bar, C, J, mode, log_base, allow_degenerate)[1]


def dedicated_feedback_load(n_users, kappa=2.0) -> float:
    """One relayed slot pair per user for per-user feedback channels."""
    return kappa * n_users


def throughput(rate, L, tau):
    """Rate left after feedback air time, ``rate·max(0, 1 - Lτ)``."""
    return rate * max(0.0, 1.0 - L * tau)
