"""Compressive-sensing SNR feedback for relay-aided multiuser scheduling.

Users above an SNR threshold feed back over a shared, undersampled channel
through a half- or full-duplex relay; the base station recovers the
block-sparse feedback, refines the SNR estimates, backs them off and
schedules the strongest user.
"""

from .analytics import (
    AnalyticInputs,
    dedicated_feedback_load,
    equivalent_snr_cdf,
    equivalent_snr_pdf,
    feedback_load,
    mean_components,
    mean_equivalent_snr,
    rate_upper_bound,
    throughput,
)
from .backoff import BackoffSolution, apply_backoff, backoff_efficiency, solve_optimal_backoff
from .channels import NetworkParams, derive_nakagami, equivalent_snr, first_hop_sinr
from .exceptions import (
    ConvergenceError,
    DegenerateBudgetError,
    DomainError,
    NoRootError,
    NumericalInstabilityError,
    RankDeficiencyError,
)
from .feedback import (
    collect_measurements,
    expand_block_dictionary,
    expected_feedback_users,
    feedback_threshold,
    measurement_budget,
    noise_covariance,
)
from .harness import ExperimentConfig, SchemeResult, load_config, run_sweep, run_trial, write_csv
from .recovery import BlockCoSaMP, BlueRegressor, block_cosamp, blue_estimate, recover_feedback

__version__ = "0.1.0"

__all__ = [
    "AnalyticInputs", "BackoffSolution", "BlockCoSaMP", "BlueRegressor", "ConvergenceError",
    "DegenerateBudgetError", "DomainError", "ExperimentConfig", "NetworkParams", "NoRootError",
    "NumericalInstabilityError", "RankDeficiencyError", "SchemeResult", "apply_backoff",
    "backoff_efficiency", "block_cosamp", "blue_estimate", "collect_measurements",
    "dedicated_feedback_load", "derive_nakagami", "equivalent_snr", "equivalent_snr_cdf",
    "equivalent_snr_pdf", "expand_block_dictionary", "expected_feedback_users", "feedback_load",
    "feedback_threshold", "first_hop_sinr", "load_config", "mean_components",
    "mean_equivalent_snr", "measurement_budget", "noise_covariance", "rate_upper_bound",
    "recover_feedback", "run_sweep", "run_trial", "solve_optimal_backoff", "throughput",
    "write_csv",
]
