import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from csfeedback.channels import NetworkParams

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def params():
    """Reference network: b² = 20 dB, σ² = 0 dB, σ_g² = 5 dB, N0 = -15 dB, ρ = 0.1."""
    return NetworkParams.from_db()


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
