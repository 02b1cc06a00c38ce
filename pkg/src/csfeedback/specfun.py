"""Special functions used by the closed-form performance formulas.

Incomplete gamma functions use the usual split: power series for
``x < a + 1`` and a modified-Lentz continued fraction otherwise.  The Gauss
hypergeometric function is summed as a plain power series and is written
against bare arithmetic operators, so it runs unchanged on ``float``,
``gmpy2.mpfr`` or ``mpmath.mpf`` arguments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .exceptions import ConvergenceError, DomainError

_EPS = 1e-16
_TINY = 1e-300


@dataclass(frozen=True)
class SeriesTolerance:
    rel_tol: float = 1e-12
    max_terms: int = 10_000

    def __post_init__(self):
        if not self.rel_tol > 0:
            raise DomainError(f"rel_tol must be positive, got {self.rel_tol}")
        if self.max_terms < 1:
            raise DomainError(f"max_terms must be >= 1, got {self.max_terms}")


DEFAULT_TOLERANCE = SeriesTolerance()


def gamma_fn(a: float) -> float:
    """Gamma function for positive real arguments."""
    if not a > 0:
        raise DomainError(f"gamma_fn requires a > 0, got {a}")
    return math.gamma(a)


def _check_inc_args(a, x):
    if not a > 0:
        raise DomainError(f"incomplete gamma requires a > 0, got a={a}")
    if not x >= 0:
        raise DomainError(f"incomplete gamma requires x >= 0, got x={x}")


def _p_series(a, x):
    # regularized lower gamma, valid for x < a + 1
    ap = a
    term = total = 1.0 / a
    for _ in range(10_000):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    else:
        raise ConvergenceError(f"P({a}, {x}) series did not converge")
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _q_contfrac(a, x):
    # regularized upper gamma, valid for x >= a + 1
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, 10_000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    else:
        raise ConvergenceError(f"Q({a}, {x}) continued fraction did not converge")
    return h * math.exp(-x + a * math.log(x) - math.lgamma(a))


def gamma_p(a: float, x: float) -> float:
    """Regularized lower incomplete gamma ``P(a, x) = γ(a, x) / Γ(a)``."""
    _check_inc_args(a, x)
    if x == 0:
        return 0.0
    if math.isinf(x):
        return 1.0
    if x < a + 1.0:
        return _p_series(a, x)
    return 1.0 - _q_contfrac(a, x)


def gamma_q(a: float, x: float) -> float:
    """Regularized upper incomplete gamma ``Q(a, x) = Γ(a, x) / Γ(a)``."""
    _check_inc_args(a, x)
    if x == 0:
        return 1.0
    if math.isinf(x):
        return 0.0
    if x < a + 1.0:
        return 1.0 - _p_series(a, x)
    return _q_contfrac(a, x)


def lower_inc_gamma(a: float, x: float) -> float:
    """Lower incomplete gamma ``γ(a, x) = ∫₀ˣ t^(a-1) e^(-t) dt``."""
    p = gamma_p(a, x)
    return gamma_fn(a) * p


def upper_inc_gamma(a: float, x: float) -> float:
    """Upper incomplete gamma ``Γ(a, x) = Γ(a) - γ(a, x)``."""
    q = gamma_q(a, x)
    return gamma_fn(a) * q


def gauss_2f1(a, b, c, z, tol: SeriesTolerance = DEFAULT_TOLERANCE):
    """Gauss hypergeometric function ``₂F₁(a, b; c; z)`` for ``0 <= z < 1``.

    Direct power series.  Summation stops once the geometric tail bound
    ``|t_k| r / (1 - r)`` falls under ``tol.rel_tol * |sum|``, where ``r`` is
    the current term ratio while ratios are falling and ``z`` while they
    rise towards it.

    The arithmetic is generic: pass ``gmpy2.mpfr`` values (and a matching
    ``rel_tol``) to sum in extended precision.

    Raises
    ------
    DomainError
        If ``c`` is a non-positive integer or ``z`` lies outside ``[0, 1)``.
    ConvergenceError
        If ``tol.max_terms`` terms do not reach the tolerance.
    """
    cf = float(c)
    if cf <= 0 and cf == math.floor(cf):
        raise DomainError(f"c must not be a non-positive integer, got {c}")
    if not (0 <= z < 1):
        raise DomainError(f"gauss_2f1 requires 0 <= z < 1, got {z}")
    one = z * 0 + 1
    total = one
    term = one
    if z == 0:
        return total
    prev_ratio = None
    for k in range(tol.max_terms):
        ratio = (a + k) * (b + k) / ((c + k) * (k + 1)) * z
        term = term * ratio
        total = total + term
        if term == 0:
            return total
        # the ratio tends to z; a falling ratio bounds later ones by itself,
        # a rising one by its limit z
        if prev_ratio is None or ratio <= prev_ratio:
            bound = ratio
        else:
            bound = z
        if bound < 1:
            tail = abs(term) * bound / (1 - bound)
            if tail <= tol.rel_tol * abs(total):
                return total
        prev_ratio = ratio
    raise ConvergenceError(
        f"2F1({a}, {b}; {c}; {z}) did not converge in {tol.max_terms} terms"
    )


def q_function(x):
    """Gaussian tail probability ``Q(x) = P(Z > x)``; accepts arrays."""
    out = 0.5 * erfc(np.asarray(x, dtype=float) / math.sqrt(2.0))
    return float(out) if np.ndim(out) == 0 else out


def db_to_linear(v):
    """Convert decibels to a linear power ratio."""
    if np.ndim(v):
        return 10.0 ** (np.asarray(v, dtype=float) / 10.0)
    return 10.0 ** (v / 10.0)
