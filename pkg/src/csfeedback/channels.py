"""Channel statistics and samplers for the BS -> relay -> user downlink.

The BS-relay link is Rician with factor ``K = b²/(2σ²)``, approximated by a
Nakagami law so that ``|f|²`` is Gamma distributed with shape
``d = (K+1)²/(2K+1)`` and scale ``θ = (b² + 2σ²)/d``.  Relay-user SNRs are
i.i.d. exponential with mean ``Pr σ_g² / N0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import DomainError
from .specfun import db_to_linear


def derive_nakagami(los_power: float, nlos_power: float) -> tuple[float, float, float]:
    """Return ``(K, d, θ)`` for LOS power ``b²`` and per-dimension NLOS power ``σ²``.

    >>> derive_nakagami(0.0, 1.0)
    (0.0, 1.0, 2.0)
    """
    if not nlos_power > 0:
        raise DomainError(f"sigma^2 must be positive, got {nlos_power}")
    if los_power < 0:
        raise DomainError(f"b^2 must be nonnegative, got {los_power}")
    K = los_power / (2.0 * nlos_power)
    d = (K + 1.0) ** 2 / (2.0 * K + 1.0)
    theta = (los_power + 2.0 * nlos_power) / d
    return K, d, theta


@dataclass(frozen=True)
class NetworkParams:
    """Physical-layer constants of the two-hop network (linear units).

    ``nlos_power`` holds ``σ²``; the NLOS multipath power is ``2σ²``.
    """

    n_users: int = 100
    bs_power: float = 1.0
    relay_power: float = 1.0
    noise_floor: float = 10 ** -1.5
    los_power: float = 100.0
    nlos_power: float = 1.0
    second_hop_var: float = 10 ** 0.5
    residual_si_gain: float = 0.1
    truncation_order: int = 3
    rician_K: float = field(init=False, repr=False)
    nakagami_d: float = field(init=False, repr=False)
    nakagami_theta: float = field(init=False, repr=False)

    def __post_init__(self):
        if self.n_users < 1:
            raise DomainError(f"n_users must be >= 1, got {self.n_users}")
        if self.truncation_order < 1:
            raise DomainError(f"truncation_order must be >= 1, got {self.truncation_order}")
        for name in ("bs_power", "relay_power", "noise_floor", "nlos_power", "second_hop_var"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive, got {getattr(self, name)}")
        if self.los_power < 0:
            raise DomainError(f"los_power must be nonnegative, got {self.los_power}")
        if not abs(self.residual_si_gain) < 1:
            raise DomainError(f"|rho| must be < 1, got {self.residual_si_gain}")
        K, d, theta = derive_nakagami(self.los_power, self.nlos_power)
        object.__setattr__(self, "rician_K", K)
        object.__setattr__(self, "nakagami_d", d)
        object.__setattr__(self, "nakagami_theta", theta)

    @classmethod
    def from_db(
        cls,
        n_users=100,
        bs_power_db=0.0,
        relay_power_db=0.0,
        noise_floor_db=-15.0,
        los_power_db=20.0,
        nlos_power_db=0.0,
        second_hop_var_db=5.0,
        residual_si_gain=0.1,
        truncation_order=3,
    ) -> "NetworkParams":
        return cls(
            n_users=int(n_users),
            bs_power=db_to_linear(bs_power_db),
            relay_power=db_to_linear(relay_power_db),
            noise_floor=db_to_linear(noise_floor_db),
            los_power=db_to_linear(los_power_db),
            nlos_power=db_to_linear(nlos_power_db),
            second_hop_var=db_to_linear(second_hop_var_db),
            residual_si_gain=float(residual_si_gain),
            truncation_order=int(truncation_order),
        )

    @property
    def mean_user_snr(self) -> float:
        return self.relay_power * self.second_hop_var / self.noise_floor

    @property
    def first_hop_interference(self) -> float:
        """Normalised interference-plus-noise ``λ = (Pr ρ² + N0) / Ps``."""
        return (self.relay_power * self.residual_si_gain ** 2 + self.noise_floor) / self.bs_power

    @property
    def mean_inverse_gain(self) -> float:
        """``E[1/|f|²] = 1/((d-1)θ)``; infinite when ``d <= 1``."""
        d, theta = self.nakagami_d, self.nakagami_theta
        return np.inf if d <= 1 else 1.0 / ((d - 1.0) * theta)


@dataclass(frozen=True)
class ChannelRealization:
    first_hop_gain: float
    user_snrs: np.ndarray


def sample_first_hop(params: NetworkParams, rng: np.random.Generator, size=None):
    """Draw ``|f|²`` from its Gamma(d, θ) law."""
    return rng.gamma(params.nakagami_d, params.nakagami_theta, size=size)


def sample_user_snrs(params: NetworkParams, rng: np.random.Generator, size=None) -> np.ndarray:
    """Draw the ``N`` relay-user SNRs (exponential, mean ``γ̄``).

    ``size`` defaults to ``(n_users,)``; pass ``(trials, n_users)`` for batches.
    """
    if size is None:
        size = params.n_users
    return rng.exponential(params.mean_user_snr, size=size)


def sample_channels(params: NetworkParams, rng: np.random.Generator) -> ChannelRealization:
    return ChannelRealization(sample_first_hop(params, rng), sample_user_snrs(params, rng))


def first_hop_sinr(params: NetworkParams, first_hop_gain):
    return params.bs_power * np.asarray(first_hop_gain) / (
        params.relay_power * params.residual_si_gain ** 2 + params.noise_floor
    )


def equivalent_snr(params: NetworkParams, first_hop_gain, selected_snr):
    """End-to-end SNR ``min(Ps|f|²/(Pr ρ² + N0), γ_selected)``."""
    out = np.minimum(first_hop_sinr(params, first_hop_gain), selected_snr)
    return float(out) if np.ndim(out) == 0 else out
