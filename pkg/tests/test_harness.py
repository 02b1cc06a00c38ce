import csv
import io
import json
import logging

import numpy as np
import pytest

from csfeedback import harness
from csfeedback.channels import sample_first_hop, sample_user_snrs
from csfeedback.exceptions import DomainError
from csfeedback.harness import (
    CSV_HEADER,
    ExperimentConfig,
    SchemeContext,
    load_config,
    run_scheme,
    run_sweep,
    run_trial,
    trial_rng,
    write_csv,
)


def test_defaults_match_reference_network():
    p = ExperimentConfig().network(100)
    assert p.mean_user_snr == pytest.approx(100.0)
    assert p.los_power == pytest.approx(100.0)
    assert p.truncation_order == 3


@pytest.mark.parametrize(
    "kw", [{"trials": 0}, {"users": [0, 10]}, {"outage_prob": 1.0}, {"schemes": ["best"]},
           {"log_base": 10}],
)
def test_config_validation(kw):
    with pytest.raises(DomainError):
        ExperimentConfig(**kw)


def test_config_rejects_unknown_keys():
    with pytest.raises(DomainError):
        ExperimentConfig.from_mapping({"trails": 10})


def test_load_config_yaml_and_json(tmp_path):
    y = tmp_path / "c.yaml"
    y.write_text("users: [50, 100]\ntrials: 20\nseed: 3\nschemes: [random]\ntau: 0.0001\n")
    cfg = load_config(y)
    assert cfg.users == [50, 100] and cfg.trials == 20 and cfg.tau == 1e-4
    j = tmp_path / "c.json"
    j.write_text(json.dumps({"users": 7, "residual_si_gain": 0.2}))
    cfg = load_config(j)
    assert cfg.users == [7] and cfg.network(7).residual_si_gain == 0.2
    bad = tmp_path / "bad.yaml"
    bad.write_text("- 1\n- 2\n")
    with pytest.raises(DomainError):
        load_config(bad)


def test_trial_seeds_are_order_free():
    a = trial_rng(5, "random", 100, 17).random()
    trial_rng(5, "random", 100, 16).random()
    assert trial_rng(5, "random", 100, 17).random() == a
    assert trial_rng(5, "dedicated", 100, 17).random() != a


def test_noiseless_limit_matches_dedicated():
    cfg = ExperimentConfig(noise_floor_db=-60.0, second_hop_var_db=-40.0, residual_si_gain=0.0)
    ctx = SchemeContext(cfg, "proposed_fd", 100)
    assert ctx.params.mean_user_snr == pytest.approx(100.0)
    hits = valid = 0
    for t in range(200):
        rng = trial_rng(1, "shared", 100, t)
        sample_first_hop(ctx.params, rng)
        n_reporting = int((sample_user_snrs(ctx.params, rng) > ctx.threshold).sum())
        if not 1 <= n_reporting <= ctx.target_sparsity:
            continue
        valid += 1
        cs = run_trial(cfg, "proposed_fd", 100, trial_rng(1, "shared", 100, t), ctx)
        ded = run_trial(cfg, "dedicated", 100, trial_rng(1, "shared", 100, t))
        if cs.selected == cs.best:
            hits += 1
            assert cs.rate == pytest.approx(ded.rate, rel=1e-4)
    assert valid > 100
    assert hits / valid >= 0.99


def test_random_single_user_equals_dedicated():
    cfg = ExperimentConfig()
    for t in range(50):
        a = run_trial(cfg, "random", 1, trial_rng(2, "s", 1, t))
        b = run_trial(cfg, "dedicated", 1, trial_rng(2, "s", 1, t))
        assert a.rate == b.rate and a.selected == 0


def test_silent_users_cause_outage_only_for_feedback_schemes():
    cfg = ExperimentConfig(outage_prob=0.5)
    ctx = SchemeContext(cfg, "proposed_hd", 20)
    seen = 0
    for t in range(60):
        rec = run_trial(cfg, "proposed_hd", 20, trial_rng(3, "s", 20, t), ctx)
        if rec.scheduling_outage:
            seen += 1
            assert rec.rate == 0.0
            assert run_trial(cfg, "dedicated", 20, trial_rng(3, "s", 20, t)).rate > 0
    assert seen > 10


def test_sweep_bookkeeping():
    cfg = ExperimentConfig(users=[30, 60], trials=25, schemes=list(harness.SCHEMES))
    results = run_sweep(cfg)
    assert [(r.scheme, r.N) for r in results] == [(s, n) for s in harness.SCHEMES for n in (30, 60)]
    for r in results:
        assert 0 <= r.outage_rate <= 1
        assert 0 <= r.support_recovery_rate <= 1
        assert r.avg_throughput <= r.avg_rate
        assert r.avg_throughput == r.avg_rate * max(0.0, 1 - r.feedback_load * cfg.tau)
        assert r.trials == 25 and r.seed == cfg.seed
    loads = {(r.scheme, r.N): r.feedback_load for r in results}
    assert loads[("dedicated", 60)] == 120 and loads[("random", 30)] == 0


def test_results_do_not_depend_on_scheme_order():
    a = run_sweep(ExperimentConfig(users=[40], trials=10, schemes=["random", "proposed_hd"]))
    b = run_sweep(ExperimentConfig(users=[40], trials=10, schemes=["proposed_hd", "random"]))
    assert a[0] == b[1] and a[1] == b[0]


def test_csv_output(tmp_path):
    cfg = ExperimentConfig(users=[20], trials=5, schemes=["random", "dedicated"])
    results = run_sweep(cfg)
    text = write_csv(results)
    assert text.splitlines()[0] == "scheme,N,trials,seed,avg_rate,avg_throughput,feedback_load,outage_rate,support_recovery_rate"
    rows = list(csv.DictReader(io.StringIO(text)))
    assert tuple(rows[0]) == CSV_HEADER
    assert float(rows[0]["avg_rate"]) == results[0].avg_rate
    out = tmp_path / "r.csv"
    write_csv(results, out)
    assert out.read_text() == text
    buf = io.StringIO()
    write_csv(results, buf)
    assert buf.getvalue() == text


def test_csv_is_deterministic():
    cfg = ExperimentConfig(users=[25, 50], trials=15)
    assert write_csv(run_sweep(cfg)) == write_csv(run_sweep(cfg))


def test_degenerate_budget_does_not_abort(caplog):
    with caplog.at_level(logging.WARNING, logger="csfeedback.harness"):
        res = run_scheme(ExperimentConfig(trials=5), "proposed_fd", 2)
    assert res.trials == 5
    assert "undersample" in caplog.text


def test_recovery_errors_become_failed_trials(monkeypatch):
    def broken(*args, **kwargs):
        raise np.linalg.LinAlgError("singular")

    monkeypatch.setattr(harness, "recover_feedback", broken)
    res = run_scheme(ExperimentConfig(trials=8), "proposed_hd", 50)
    assert res.failures == 8 and res.avg_rate == 0.0 and res.outage_rate == 1.0


def test_multiplicative_rate_is_logged():
    res = run_scheme(ExperimentConfig(trials=20), "proposed_hd", 50)
    assert np.isfinite(res.avg_rate_multiplicative) and res.avg_rate_multiplicative > 0


def test_undefined_error_variance_falls_back(caplog):
    cfg = ExperimentConfig(outage_prob=0.95, trials=5)
    with caplog.at_level(logging.WARNING, logger="csfeedback.harness"):
        res = run_scheme(cfg, "proposed_hd", 20)
    assert res.trials == 5 and res.failures == 5
    assert "error-variance" in caplog.text
