import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from csfeedback.channels import NetworkParams, sample_first_hop, sample_user_snrs
from csfeedback.exceptions import DegenerateBudgetError, DomainError
from csfeedback.feedback import (
    block_vector,
    build_sparse_vector,
    collect_measurements,
    expand_block_dictionary,
    expected_feedback_users,
    feedback_threshold,
    generate_sensing_matrix,
    measurement_budget,
    noise_covariance,
    synthesize,
    synthesize_fd,
    synthesize_hd,
    synthesize_noise,
)

N0 = 10**-1.5


class TestThreshold:
    def test_single_user(self):
        assert feedback_threshold(1.0, 1, 0.01) == pytest.approx(0.010050335853501441, rel=1e-14)

    def test_hundred_users(self):
        assert feedback_threshold(1.0, 100, 0.01) == pytest.approx(3.100928047703244, rel=1e-13)

    @given(st.floats(0.1, 1e3), st.integers(1, 1000), st.floats(1e-4, 0.5))
    def test_round_trip(self, mean_snr, n, p_o):
        th = feedback_threshold(mean_snr, n, p_o)
        assert (-math.expm1(-th / mean_snr)) ** n == pytest.approx(p_o, rel=1e-9)

    @pytest.mark.parametrize("args", [(1.0, 10, 0.0), (1.0, 10, 1.0), (0.0, 10, 0.1), (1.0, 0, 0.1)])
    def test_domain(self, args):
        with pytest.raises(DomainError):
            feedback_threshold(*args)


class TestSparseVector:
    def test_example(self):
        fb = build_sparse_vector([5.0, 1.0, 7.0], 2.0)
        np.testing.assert_array_equal(fb.x, [5.0, 0.0, 7.0])
        np.testing.assert_array_equal(fb.support, [0, 2])
        assert fb.sparsity == 2

    def test_all_below(self):
        assert build_sparse_vector([0.5, 1.0], 2.0).support.size == 0

    @given(st.lists(st.floats(0, 1e3), min_size=1, max_size=50), st.floats(0, 1e3))
    def test_support_invariant(self, snrs, th):
        fb = build_sparse_vector(snrs, th)
        snrs = np.asarray(snrs)
        assert np.all(fb.x[fb.support] > th)
        off = np.setdiff1d(np.arange(snrs.size), fb.support)
        assert np.all(fb.x[off] == 0)

    def test_mean_support_size(self, params, rng):
        th = feedback_threshold(params.mean_user_snr, 100, 0.01)
        snrs = sample_user_snrs(params, rng, size=(10**5, 100))
        assert (snrs > th).sum(axis=1).mean() == pytest.approx(4.500741397856405, rel=0.02)


class TestExpectedUsers:
    def test_single_user(self):
        assert expected_feedback_users(1, 0.01) == pytest.approx(0.99, rel=1e-14)

    def test_hundred(self):
        assert expected_feedback_users(100, 0.01) == pytest.approx(4.500741397856405, rel=1e-13)

    def test_monotone_in_users(self):
        vals = [expected_feedback_users(n, 0.01) for n in range(1, 501)]
        assert all(b > a for a, b in zip(vals, vals[1:]))


class TestBudget:
    s_bar = 4.500741397856405

    def test_fd(self):
        assert measurement_budget(100, self.s_bar, 2.0, 3, "fd") == (65, 65)

    def test_hd(self):
        assert measurement_budget(100, self.s_bar, 2.0, 1, "hd") == (28, 56)

    def test_fd_with_unit_blocks_adds_sparsity_term(self):
        s = self.s_bar
        M_fd, L_fd = measurement_budget(100, s, 2.0, 1, "fd")
        M_hd, L_hd = measurement_budget(100, s, 2.0, 1, "hd")
        assert M_fd == math.ceil(2.0 * (s + s * math.log(100 / s)))
        assert M_hd == math.ceil(2.0 * s * math.log(100 / s))
        assert (L_fd, L_hd) == (M_fd, 2 * M_hd)

    def test_log_base_option(self):
        M, _ = measurement_budget(100, self.s_bar, 2.0, 1, "hd", log_base=2)
        assert M == math.ceil(2.0 * self.s_bar * math.log2(100 / self.s_bar))

    def test_degenerate(self):
        s = expected_feedback_users(2, 0.01)
        with pytest.raises(DegenerateBudgetError):
            measurement_budget(2, s, 2.0, 3, "fd")
        M, L = measurement_budget(2, s, 2.0, 3, "fd", allow_degenerate=True)
        assert M >= 6 and L == M

    @pytest.mark.parametrize("args", [(100, 0.0, 2.0, 3), (3, 4.0, 2.0, 3), (100, 4.5, 0.0, 3)])
    def test_domain(self, args):
        with pytest.raises(DomainError):
            measurement_budget(*args, "fd")

    def test_bad_mode(self):
        with pytest.raises(ValueError):
            measurement_budget(100, 4.5, 2.0, 3, "xd")


class TestSensingMatrix:
    def test_entry_variance(self, rng):
        A = generate_sensing_matrix(64, 400, rng)
        assert A.var() == pytest.approx(1 / 64, rel=0.02)
        assert np.mean(np.sum(A**2, axis=0)) == pytest.approx(1.0, rel=0.05)

    def test_seeded(self):
        a = generate_sensing_matrix(10, 20, np.random.default_rng(1))
        b = generate_sensing_matrix(10, 20, np.random.default_rng(1))
        np.testing.assert_array_equal(a, b)


class TestBlockDictionary:
    def test_unit_blocks(self, rng):
        A = rng.standard_normal((5, 4))
        np.testing.assert_array_equal(expand_block_dictionary(A, 1), A)

    def test_hand_built(self):
        A = np.array([[1.0, 4.0], [2.0, 5.0], [3.0, 6.0]])
        expected = np.array([
            [1.0, 0.0, 4.0, 0.0],
            [2.0, 1.0, 5.0, 4.0],
            [3.0, 2.0, 6.0, 5.0],
        ])
        np.testing.assert_array_equal(expand_block_dictionary(A, 2), expected)

    @given(st.integers(1, 12), st.integers(1, 6), st.integers(1, 5))
    def test_shift_structure(self, M, N, J):
        A = np.arange(1.0, M * N + 1).reshape(M, N)
        B = expand_block_dictionary(A, J)
        assert B.shape == (M, N * J)
        for n in range(N):
            for j in range(J):
                col = B[:, n * J + j]
                assert np.all(col[: min(j, M)] == 0)
                np.testing.assert_array_equal(col[j:], A[: M - j, n] if j < M else [])

    def test_block_vector(self):
        np.testing.assert_allclose(block_vector([4.0, 0.0], 0.1, 3), [4.0, 0.4, 0.04, 0, 0, 0])


class TestSynthesis:
    def test_hd_noiseless(self, params, rng):
        y = synthesize_hd(np.eye(2), [3.0, 0.0], 100.0, params, rng, noise=False)
        np.testing.assert_array_equal(y, [3.0, 0.0])
        zero = synthesize_hd(rng.standard_normal((4, 6)), np.zeros(6), 1.0, params, rng, noise=False)
        np.testing.assert_array_equal(zero, 0.0)

    def test_fd_recursion(self, params, rng):
        y = synthesize_fd(np.eye(3), [1.0, 2.0, 3.0], 100.0, params, rng, noise=False)
        np.testing.assert_allclose(y, [1.0, 2.1, 3.21], rtol=1e-15)

    def test_fd_without_self_interference_is_hd(self, rng):
        p = NetworkParams(residual_si_gain=0.0)
        A = rng.standard_normal((6, 4))
        x = np.array([0.0, 5.0, 0.0, 2.0])
        a = synthesize_fd(A, x, 80.0, p, np.random.default_rng(9))
        b = synthesize_hd(A, x, 80.0, p, np.random.default_rng(9))
        np.testing.assert_allclose(a, b, rtol=1e-14)

    def test_truncated_model(self, params, rng):
        M, N, J = 65, 30, 3
        A = generate_sensing_matrix(M, N, rng)
        x = np.zeros(N)
        x[[3, 17]] = [350.0, 420.0]
        y = synthesize(A, x, 1.0, params, rng, "fd", noise=False)
        model = expand_block_dictionary(A, J) @ block_vector(x, params.residual_si_gain, J)
        rel = np.linalg.norm(y - model) / np.linalg.norm(y)
        assert rel <= params.residual_si_gain**J * M

    def test_hd_noise_covariance(self, params, rng):
        M, trials = 4, 10**5
        A = generate_sensing_matrix(M, 5, rng)
        gains = sample_first_hop(params, rng, size=trials)
        z = np.array([synthesize_hd(A, np.zeros(5), g, params, rng) for g in gains])
        emp = z.T @ z / trials
        expected = N0 * (1 + params.mean_inverse_gain)
        np.testing.assert_allclose(np.diag(emp), expected, rtol=0.03)
        assert np.max(np.abs(emp - np.diag(np.diag(emp)))) < 0.03 * expected

    def test_fd_relay_noise_autocovariance(self, rng):
        rho, M = 0.5, 200_000
        p = NetworkParams(noise_floor=1.0, residual_si_gain=rho)
        y = synthesize_fd(np.zeros((M, 1)), [0.0], 1.0, p, rng)[100:]
        lag1 = np.mean(y[1:] * y[:-1])
        assert lag1 == pytest.approx(rho / (1 - rho**2), rel=0.03)


class TestNoiseCovariance:
    def test_reference_coefficients(self, params):
        S = noise_covariance(params, 65, "fd")
        assert S[0, 0] == pytest.approx(N0 * 1.0102, rel=1e-12)
        assert S[1, 1] == pytest.approx(N0 * 1.0202, rel=1e-12)
        assert S[1, 0] == pytest.approx(0.1 * N0, rel=1e-12)
        assert np.count_nonzero(np.triu(S, 2)) == 0

    def test_no_self_interference_is_diagonal(self):
        S = noise_covariance(NetworkParams(residual_si_gain=0.0), 10, "fd")
        np.testing.assert_array_equal(S, np.diag(np.diag(S)))
        assert np.all(np.diag(S) == S[0, 0])

    def test_hd_is_scaled_identity(self, params):
        S = noise_covariance(params, 7, "hd")
        np.testing.assert_allclose(S, N0 * (1 + params.mean_inverse_gain) * np.eye(7))

    def test_realised_gain(self, params):
        S = noise_covariance(params, 3, "hd", first_hop_gain=50.0)
        np.testing.assert_allclose(S, N0 * (1 + 1 / 50.0) * np.eye(3))

    def test_diverging_inverse_gain(self):
        with pytest.raises(DomainError):
            noise_covariance(NetworkParams(los_power=0.0), 5, "fd")

    @given(st.floats(-0.45, 0.45))
    def test_positive_definite(self, rho):
        S = noise_covariance(NetworkParams(residual_si_gain=rho), 65, "fd")
        np.testing.assert_array_equal(S, S.T)
        assert np.linalg.eigvalsh(S)[0] > 0

    def test_truncated_noise_matches(self, params, rng):
        trials, M = 10**5, 12
        gains = sample_first_hop(params, rng, size=trials)
        z = synthesize_noise(M, gains, params, rng, "fd")
        emp = z.T @ z / trials
        S = noise_covariance(params, M, "fd")
        diag = np.arange(M)
        np.testing.assert_allclose(emp[diag, diag], S[diag, diag], rtol=0.03)
        # off-diagonal sampling error is ~3% of ρN0 per entry; check the band mean
        band = emp[diag[1:], diag[:-1]].mean()
        assert band == pytest.approx(S[1, 0], rel=0.03)

    def test_mean_inverse_gain(self, rng):
        for b2 in (10.0, 100.0):
            p = NetworkParams(los_power=b2)
            assert p.nakagami_d >= 2
            draws = 1 / sample_first_hop(p, rng, size=10**6)
            assert draws.mean() == pytest.approx(p.mean_inverse_gain, rel=0.01)


def test_collect_measurements_shapes(params, rng):
    x = np.zeros(20)
    x[4] = 300.0
    batch = collect_measurements(x, 90.0, params, 30, "FD", rng)
    assert batch.mode == "fd"
    assert batch.sensing_matrix.shape == (30, 20)
    assert batch.block_dictionary.shape == (30, 60)
    assert batch.received.shape == (30,)
    hd = collect_measurements(x, 90.0, params, 30, "hd", rng, realized_covariance=True)
    assert hd.block_dictionary is hd.sensing_matrix
    np.testing.assert_allclose(np.diag(hd.noise_cov), N0 * (1 + 1 / 90.0))
