"""Monte Carlo comparison of scheduling schemes over a user-count sweep.

Schemes
-------
proposed_fd, proposed_hd
    Threshold feedback over a shared CS channel (FD or HD relaying), block
    CoSaMP + BLUE/LS at the BS, optimal back-off, then the largest
    backed-off estimate is scheduled.
no_backoff
    ``proposed_fd`` with ``Δ = 0``.
dedicated
    Noise-free per-user feedback; the BS schedules the true strongest user.
random
    A uniformly random user, served at its own end-to-end capacity.

Every trial draws its own generator from
``SeedSequence([seed, crc32(scheme), N, trial])`` so results do not depend
on the order in which schemes, user counts or trials are run.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import zlib
from dataclasses import asdict, dataclass, field, fields
from functools import cached_property
from pathlib import Path

import numpy as np
import yaml

from . import analytics
from .backoff import apply_backoff, solve_optimal_backoff
from .channels import NetworkParams, equivalent_snr, first_hop_sinr, sample_first_hop, sample_user_snrs
from .exceptions import DegenerateBudgetError, DomainError, NoRootError
from .feedback import (
    build_sparse_vector,
    collect_measurements,
    expected_feedback_users,
    feedback_threshold,
    measurement_budget,
    noise_covariance,
)
from .recovery import blue_error_variance, ls_error_variance, recover_feedback
from .specfun import q_function

log = logging.getLogger(__name__)

SCHEMES = ("proposed_fd", "proposed_hd", "dedicated", "random", "no_backoff")
CSV_HEADER = (
    "scheme", "N", "trials", "seed", "avg_rate", "avg_throughput",
    "feedback_load", "outage_rate", "support_recovery_rate",
)
_CS_MODE = {"proposed_fd": "fd", "proposed_hd": "hd", "no_backoff": "fd"}


@dataclass
class ExperimentConfig:
    """Sweep settings.  Powers are in dB as quoted for the reference setup."""

    bs_power_db: float = 0.0
    relay_power_db: float = 0.0
    noise_floor_db: float = -15.0
    los_power_db: float = 20.0
    nlos_power_db: float = 0.0
    second_hop_var_db: float = 5.0
    residual_si_gain: float = 0.1
    truncation_order: int = 3
    users: list = field(default_factory=lambda: [100])
    trials: int = 1000
    seed: int = 12345
    C: float = 2.0
    outage_prob: float = 0.01
    tau: float = 1.0 / 600.0
    schemes: list = field(default_factory=lambda: list(SCHEMES))
    kappa_dedicated: float = 2.0
    log_base: object = 2
    budget_log_base: object = "e"
    target_sparsity: int | None = None
    max_iter: int = 50
    cs_tol: float = 1e-9
    realized_covariance: bool = False
    rho_aware: bool = False
    output: str | None = None

    def __post_init__(self):
        self.users = [int(n) for n in np.atleast_1d(self.users)]
        self.schemes = [str(s) for s in np.atleast_1d(self.schemes)]
        if self.trials < 1:
            raise DomainError(f"trials must be >= 1, got {self.trials}")
        if any(n < 1 for n in self.users):
            raise DomainError(f"every user count must be >= 1, got {self.users}")
        if not 0 < self.outage_prob < 1:
            raise DomainError(f"outage_prob must lie in (0, 1), got {self.outage_prob}")
        unknown = set(self.schemes) - set(SCHEMES)
        if unknown:
            raise DomainError(f"unknown schemes {sorted(unknown)}; choose from {SCHEMES}")
        if str(self.log_base) not in ("2", "e", "2.0"):
            raise DomainError(f"log_base must be 2 or 'e', got {self.log_base}")

    @classmethod
    def from_mapping(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        extra = set(data) - known
        if extra:
            raise DomainError(f"unknown config keys: {sorted(extra)}")
        return cls(**data)

    def network(self, n_users: int) -> NetworkParams:
        return NetworkParams.from_db(
            n_users=n_users,
            bs_power_db=self.bs_power_db,
            relay_power_db=self.relay_power_db,
            noise_floor_db=self.noise_floor_db,
            los_power_db=self.los_power_db,
            nlos_power_db=self.nlos_power_db,
            second_hop_var_db=self.second_hop_var_db,
            residual_si_gain=self.residual_si_gain,
            truncation_order=self.truncation_order,
        )

    @property
    def rate_log(self):
        return math.log2 if str(self.log_base) in ("2", "2.0") else math.log

    @property
    def budget_base(self):
        return None if str(self.budget_log_base) == "e" else float(self.budget_log_base)


def load_config(path) -> ExperimentConfig:
    """Read a YAML (or JSON) mapping of :class:`ExperimentConfig` fields."""
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise DomainError(f"config {path} must hold a mapping")
    return ExperimentConfig.from_mapping(data)


@dataclass
class TrialRecord:
    rate: float
    selected: int
    best: int
    scheduling_outage: bool = False
    overestimated: bool = False
    failed: bool = False
    rate_multiplicative: float = math.nan


@dataclass
class SchemeResult:
    scheme: str
    N: int
    avg_rate: float
    avg_throughput: float
    feedback_load: float
    outage_rate: float
    support_recovery_rate: float
    trials: int
    seed: int
    rate_std_error: float = math.nan
    avg_rate_multiplicative: float = math.nan
    failures: int = 0

    def csv_row(self):
        return [
            self.scheme, self.N, self.trials, self.seed, repr(float(self.avg_rate)),
            repr(float(self.avg_throughput)), repr(float(self.feedback_load)),
            repr(float(self.outage_rate)), repr(float(self.support_recovery_rate)),
        ]


class SchemeContext:
    """Per-(scheme, N) quantities shared by every trial."""

    def __init__(self, config: ExperimentConfig, scheme: str, n_users: int):
        if scheme not in SCHEMES:
            raise DomainError(f"unknown scheme {scheme!r}")
        self.config = config
        self.scheme = scheme
        self.params = config.network(n_users)
        self.mode = _CS_MODE.get(scheme)

    @cached_property
    def threshold(self):
        c = self.config
        return feedback_threshold(self.params.mean_user_snr, self.params.n_users, c.outage_prob)

    @cached_property
    def mean_sparsity(self):
        return expected_feedback_users(self.params.n_users, self.config.outage_prob)

    @cached_property
    def block_size(self):
        return self.params.truncation_order if self.mode == "fd" else 1

    @cached_property
    def budget(self):
        c = self.config
        try:
            return measurement_budget(
                self.params.n_users, self.mean_sparsity, c.C, self.block_size, self.mode,
                c.budget_base,
            )
        except DegenerateBudgetError as exc:
            log.warning("%s N=%d: %s; using it anyway", self.scheme, self.params.n_users, exc)
            return measurement_budget(
                self.params.n_users, self.mean_sparsity, c.C, self.block_size, self.mode,
                c.budget_base, allow_degenerate=True,
            )

    @cached_property
    def target_sparsity(self):
        if self.config.target_sparsity is not None:
            return int(self.config.target_sparsity)
        return max(1, round(self.mean_sparsity))

    @cached_property
    def feedback_load(self):
        if self.scheme == "dedicated":
            return analytics.dedicated_feedback_load(self.params.n_users, self.config.kappa_dedicated)
        if self.scheme == "random":
            return 0
        return self.budget[1]

    @cached_property
    def noise_cov(self):
        return noise_covariance(self.params, self.budget[0], self.mode)

    @cached_property
    def sigma_e(self):
        M = self.budget[0]
        if self.mode == "fd":
            return math.sqrt(blue_error_variance(M, self.noise_cov))
        return math.sqrt(ls_error_variance(M, self.target_sparsity, float(self.noise_cov[0, 0])))

    @cached_property
    def mean_eq_snr(self):
        inp = analytics.AnalyticInputs.from_params(
            self.params, self.config.outage_prob, self.config.C, self.config.tau
        )
        return analytics.mean_equivalent_snr(inp)

    @cached_property
    def delta(self):
        if self.scheme == "no_backoff":
            return 0.0
        try:
            return solve_optimal_backoff(self.mean_eq_snr, self.sigma_e).delta
        except NoRootError as exc:
            log.warning("optimal back-off not bracketed (%s); using 0", exc)
        except (DomainError, np.linalg.LinAlgError) as exc:
            log.warning("%s N=%d: no error-variance model (%s); using 0",
                        self.scheme, self.params.n_users, exc)
        return 0.0


def trial_rng(seed: int, scheme: str, n_users: int, trial: int) -> np.random.Generator:
    key = [int(seed) & 0xFFFFFFFFFFFFFFFF, zlib.crc32(scheme.encode()), int(n_users), int(trial)]
    return np.random.default_rng(np.random.SeedSequence(key))


def run_trial(
    config: ExperimentConfig,
    scheme: str,
    n_users: int,
    rng: np.random.Generator,
    context: SchemeContext | None = None,
) -> TrialRecord:
    """Simulate one coherence interval of ``scheme`` with ``n_users`` users.

    Passing a prebuilt ``context`` for the same ``(config, scheme, n_users)``
    skips recomputing the threshold, budget and back-off.
    """
    ctx = context if context is not None else SchemeContext(config, scheme, n_users)
    params, cfg = ctx.params, ctx.config
    rate_log = cfg.rate_log
    gain = float(sample_first_hop(params, rng))
    snrs = sample_user_snrs(params, rng)
    best = int(np.argmax(snrs))
    hop1 = float(first_hop_sinr(params, gain))

    if ctx.scheme == "dedicated":
        return TrialRecord(rate_log(1.0 + min(hop1, snrs[best])), best, best)
    if ctx.scheme == "random":
        pick = int(rng.integers(params.n_users))
        r = rate_log(1.0 + min(hop1, snrs[pick]))
        return TrialRecord(r, pick, best, rate_multiplicative=r)

    delta = ctx.delta
    eq_best = equivalent_snr(params, gain, snrs[best])
    try:
        eta = 1.0 - q_function(delta / ctx.sigma_e)
    except (DomainError, np.linalg.LinAlgError):
        eta = 0.5
    mult = rate_log(1.0 + max(eq_best - delta, 0.0)) * (1.0 - cfg.outage_prob) * eta

    fb = build_sparse_vector(snrs, ctx.threshold)
    M = ctx.budget[0]
    try:
        batch = collect_measurements(
            fb.x, gain, params, M, ctx.mode, rng, realized_covariance=cfg.realized_covariance
        )
        noise_cov = batch.noise_cov if cfg.realized_covariance else ctx.noise_cov
        rec = recover_feedback(
            batch.block_dictionary, batch.received, noise_cov, ctx.block_size,
            ctx.target_sparsity, cfg.cs_tol, cfg.max_iter,
            rho=params.residual_si_gain if cfg.rho_aware else None,
        )
    except (np.linalg.LinAlgError, DomainError) as exc:
        log.debug("trial failed: %s", exc)
        return TrialRecord(0.0, -1, best, failed=True, rate_multiplicative=mult)

    # every genuine report exceeds the public threshold
    candidates = {u: v for u, v in rec.snr_estimates.items() if v > ctx.threshold}
    if not candidates:
        return TrialRecord(0.0, -1, best, scheduling_outage=True, rate_multiplicative=mult)
    users = np.array(sorted(candidates))
    backed = apply_backoff(np.array([candidates[u] for u in users]), delta)
    sel = int(users[int(np.argmax(backed))])
    target = float(np.max(backed))
    if target > snrs[sel]:
        return TrialRecord(0.0, sel, best, overestimated=True, rate_multiplicative=mult)
    return TrialRecord(rate_log(1.0 + min(hop1, target)), sel, best, rate_multiplicative=mult)


def aggregate(ctx: SchemeContext, records: list[TrialRecord]) -> SchemeResult:
    rates = np.array([r.rate for r in records])
    n = len(records)
    avg = float(rates.mean())
    se = float(rates.std(ddof=1) / math.sqrt(n)) if n > 1 else math.nan
    outage = sum(r.rate == 0.0 for r in records) / n
    hits = sum(r.selected == r.best for r in records) / n
    mult = float(np.mean([r.rate_multiplicative for r in records]))
    return SchemeResult(
        scheme=ctx.scheme,
        N=ctx.params.n_users,
        avg_rate=avg,
        avg_throughput=analytics.throughput(avg, ctx.feedback_load, ctx.config.tau),
        feedback_load=float(ctx.feedback_load),
        outage_rate=outage,
        support_recovery_rate=hits,
        trials=n,
        seed=ctx.config.seed,
        rate_std_error=se,
        avg_rate_multiplicative=mult,
        failures=sum(r.failed for r in records),
    )


def run_scheme(config: ExperimentConfig, scheme: str, n_users: int) -> SchemeResult:
    ctx = SchemeContext(config, scheme, n_users)
    records = [
        run_trial(config, scheme, n_users, trial_rng(config.seed, scheme, n_users, t), ctx)
        for t in range(config.trials)
    ]
    return aggregate(ctx, records)


def run_sweep(config: ExperimentConfig) -> list[SchemeResult]:
    """Run every configured scheme at every user count."""
    results = []
    for scheme in config.schemes:
        for n in config.users:
            log.info("running %s at N=%d (%d trials)", scheme, n, config.trials)
            results.append(run_scheme(config, scheme, n))
    return results


def write_csv(results, path=None) -> str:
    """Write results as CSV to ``path`` (a path or open text file); return the text."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for res in results:
        writer.writerow(res.csv_row())
    text = buf.getvalue()
    if path is None:
        return text
    if hasattr(path, "write"):
        path.write(text)
    else:
        Path(path).write_text(text)
    return text


def result_dict(res: SchemeResult) -> dict:
    return asdict(res)
