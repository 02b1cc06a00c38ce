"""Threshold feedback, sensing matrices and measurement synthesis.

Users whose SNR exceeds ``γ_th`` multiply it onto their Gaussian signature
column; the relay forwards the superposition to the BS either half-duplex
(two orthogonal hops) or full-duplex (one hop, with residual
self-interference ``ρ`` leaking the previous mini-slot into the current one).

FD measurements are generated with the exact recursion
``y_r[m] = a_m·x + ρ·y_r[m-1] + z_r[m]``.  The receiver instead uses the
``J``-tap truncated dictionary built by :func:`expand_block_dictionary`, so
the truncation error is part of every simulation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import toeplitz
from scipy.signal import lfilter

from .channels import NetworkParams
from .exceptions import DegenerateBudgetError, DomainError

MODES = ("hd", "fd")


def _mode(mode: str) -> str:
    m = str(mode).lower()
    if m not in MODES:
        raise ValueError(f"mode must be 'hd' or 'fd', got {mode!r}")
    return m


@dataclass(frozen=True)
class SparseFeedback:
    x: np.ndarray
    support: np.ndarray
    threshold: float

    @property
    def sparsity(self) -> int:
        return len(self.support)


@dataclass(frozen=True)
class MeasurementBatch:
    sensing_matrix: np.ndarray
    block_dictionary: np.ndarray
    received: np.ndarray
    noise_cov: np.ndarray
    mode: str


def _check_outage_prob(n_users, outage_prob):
    if not 0 < outage_prob < 1:
        raise DomainError(f"outage probability must lie in (0, 1), got {outage_prob}")
    if n_users < 1:
        raise DomainError(f"n_users must be >= 1, got {n_users}")


def feedback_threshold(mean_snr: float, n_users: int, outage_prob: float) -> float:
    """SNR threshold giving scheduling outage ``P_o`` among ``N`` exponential users.

    Solves ``(1 - exp(-γ_th/γ̄))^N = P_o``.
    """
    _check_outage_prob(n_users, outage_prob)
    if not mean_snr > 0:
        raise DomainError(f"mean SNR must be positive, got {mean_snr}")
    # -log1p(-p) keeps precision when P_o^(1/N) is close to 1
    return -mean_snr * math.log1p(-(outage_prob ** (1.0 / n_users)))


def expected_feedback_users(n_users: int, outage_prob: float) -> float:
    """Mean number of users above threshold, ``N(1 - P_o^(1/N))``."""
    _check_outage_prob(n_users, outage_prob)
    return -n_users * math.expm1(math.log(outage_prob) / n_users)


def build_sparse_vector(snrs, threshold: float) -> SparseFeedback:
    snrs = np.asarray(snrs, dtype=float)
    mask = snrs > threshold
    return SparseFeedback(np.where(mask, snrs, 0.0), np.flatnonzero(mask), float(threshold))


def measurement_budget(
    n_users: int,
    mean_sparsity: float,
    C: float,
    J: int,
    mode: str,
    log_base: float | None = None,
    allow_degenerate: bool = False,
) -> tuple[int, int]:
    """Number of CS measurements ``M`` and feedback mini-slots ``L``.

    FD: ``M = L = ⌈C(J S̄ + S̄ log(J N / S̄))⌉``.
    HD: ``M = ⌈C S̄ log(N / S̄)⌉`` and ``L = 2M`` (two orthogonal hops).
    ``log_base=None`` means the natural logarithm.

    Raises
    ------
    DegenerateBudgetError
        If ``M`` reaches the number of unknowns (``N`` for HD, ``N J`` for
        FD), unless ``allow_degenerate`` is set.
    """
    mode = _mode(mode)
    if not mean_sparsity > 0:
        raise DomainError(f"mean sparsity must be positive, got {mean_sparsity}")
    if n_users < mean_sparsity:
        raise DomainError(f"need N >= S̄, got N={n_users}, S̄={mean_sparsity}")
    if not C > 0:
        raise DomainError(f"C must be positive, got {C}")

    def log(v):
        return math.log(v) if log_base is None else math.log(v, log_base)

    s = mean_sparsity
    if mode == "fd":
        M = math.ceil(C * (J * s + s * log(J * n_users / s)))
        L, unknowns = M, n_users * J
    else:
        M = math.ceil(C * s * log(n_users / s))
        L, unknowns = 2 * M, n_users
    M = max(M, 1)
    L = max(L, 1 if mode == "fd" else 2)
    if M >= unknowns and not allow_degenerate:
        raise DegenerateBudgetError(
            f"M={M} does not undersample {unknowns} unknowns ({mode.upper()}, N={n_users})"
        )
    return M, L


def generate_sensing_matrix(M: int, N: int, rng: np.random.Generator) -> np.ndarray:
    """``M x N`` signature matrix with i.i.d. ``N(0, 1/M)`` entries."""
    return rng.standard_normal((M, N)) / math.sqrt(M)


def expand_block_dictionary(A: np.ndarray, J: int) -> np.ndarray:
    """Block dictionary ``B = [B_1, ..., B_N]`` with ``B_n = [a_n^0, ..., a_n^(J-1)]``.

    ``a_n^j`` is column ``n`` of ``A`` shifted down by ``j`` with zero fill.
    """
    A = np.asarray(A, dtype=float)
    if J < 1:
        raise DomainError(f"J must be >= 1, got {J}")
    M, N = A.shape
    B = np.zeros((M, N, J))
    for j in range(min(J, M)):
        B[j:, :, j] = A[: M - j, :]
    return B.reshape(M, N * J)


def block_vector(x, rho: float, J: int) -> np.ndarray:
    """Stack ``[x_n, ρ x_n, ..., ρ^(J-1) x_n]`` for every user."""
    x = np.asarray(x, dtype=float)
    return (x[:, None] * rho ** np.arange(J)[None, :]).ravel()


def synthesize_hd(A, x, first_hop_gain, params: NetworkParams, rng, noise=True) -> np.ndarray:
    """HD measurements ``y = A x + z_r + w/f``."""
    y = np.asarray(A) @ np.asarray(x, dtype=float)
    if noise:
        M = y.shape[0]
        n0 = params.noise_floor
        y = y + math.sqrt(n0) * rng.standard_normal(M)
        y = y + math.sqrt(n0 / first_hop_gain) * rng.standard_normal(M)
    return y


def synthesize_fd(A, x, first_hop_gain, params: NetworkParams, rng, noise=True) -> np.ndarray:
    """FD measurements from the untruncated self-interference recursion."""
    r = np.asarray(A) @ np.asarray(x, dtype=float)
    M = r.shape[0]
    n0 = params.noise_floor
    if noise:
        r = r + math.sqrt(n0) * rng.standard_normal(M)
    y = lfilter([1.0], [1.0, -params.residual_si_gain], r)
    if noise:
        y = y + math.sqrt(n0 / first_hop_gain) * rng.standard_normal(M)
    return y


def synthesize(A, x, first_hop_gain, params, rng, mode, noise=True):
    if _mode(mode) == "fd":
        return synthesize_fd(A, x, first_hop_gain, params, rng, noise=noise)
    return synthesize_hd(A, x, first_hop_gain, params, rng, noise=noise)


def _relay_taps(params: NetworkParams, mode: str) -> np.ndarray:
    if _mode(mode) == "hd":
        return np.array([1.0])
    K = math.ceil(params.truncation_order / 2)
    return params.residual_si_gain ** np.arange(K)


def synthesize_noise(M, first_hop_gain, params: NetworkParams, rng, mode) -> np.ndarray:
    """Draw the receiver-model noise vector ``ẑ``.

    FD keeps the first ``⌈J/2⌉`` self-interference taps of the relay noise,
    ``ẑ_m = w_m/f + Σ_k ρ^k z_r[m-k]``; HD is ``w_m/f + z_r[m]``.  An array
    of gains yields one noise vector per gain, stacked along the first axis.
    """
    n0 = params.noise_floor
    gain = np.asarray(first_hop_gain, dtype=float)
    shape = gain.shape + (M,)
    z = math.sqrt(n0) * rng.standard_normal(shape)
    relay = lfilter(_relay_taps(params, mode), [1.0], z, axis=-1)
    return relay + np.sqrt(n0 / gain)[..., None] * rng.standard_normal(shape)


def noise_covariance(params: NetworkParams, M: int, mode: str, first_hop_gain=None) -> np.ndarray:
    """Covariance ``Σ_ẑ`` of the receiver-model noise.

    With ``first_hop_gain=None`` the BS-noise term uses ``E[1/|f|²] =
    1/((d-1)θ)``; pass a realised ``|f|²`` to condition on it instead.  For
    ``J = 3`` FD this is tridiagonal with ``α₁ = N0(1 + 1/((d-1)θ))`` at the
    corner, ``α₂ = N0(1 + ρ² + 1/((d-1)θ))`` on the rest of the diagonal and
    ``α₃ = ρ N0`` off the diagonal.
    """
    n0 = params.noise_floor
    if first_hop_gain is None:
        if params.nakagami_d <= 1:
            raise DomainError(
                f"E[1/|f|^2] diverges for d <= 1 (d={params.nakagami_d}); "
                "use a realised first-hop gain"
            )
        inv_gain = params.mean_inverse_gain
    else:
        inv_gain = 1.0 / first_hop_gain
    taps = _relay_taps(params, mode)
    col = np.zeros(M)
    col[: min(len(taps), M)] = taps[:M]
    T = np.tril(toeplitz(col))
    return n0 * (T @ T.T) + n0 * inv_gain * np.eye(M)


def collect_measurements(
    x,
    first_hop_gain: float,
    params: NetworkParams,
    M: int,
    mode: str,
    rng: np.random.Generator,
    realized_covariance: bool = False,
    noise: bool = True,
) -> MeasurementBatch:
    """Draw a signature matrix and the BS measurements for one coherence interval."""
    mode = _mode(mode)
    x = np.asarray(x, dtype=float)
    A = generate_sensing_matrix(M, x.shape[0], rng)
    J = params.truncation_order if mode == "fd" else 1
    B = expand_block_dictionary(A, J) if J > 1 else A
    y = synthesize(A, x, first_hop_gain, params, rng, mode, noise=noise)
    cov = noise_covariance(params, M, mode, first_hop_gain if realized_covariance else None)
    return MeasurementBatch(A, B, y, cov, mode)
