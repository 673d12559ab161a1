import itertools
import math

import numpy as np
import pytest

from glsim.adversary import (ActiveAttackConfig, eve_decrypt, greedy_sampling_set,
                             jamming_schedule, reconstruct_dynamics)
from glsim.pipeline import BitStream, modulate_ook


def _orthonormal(seed, n, r):
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.normal(size=(n, r)))
    return q


def _cond(rows):
    sv = np.linalg.svd(rows, compute_uv=False)
    sv = sv[sv > 1e-12]
    return sv[0] / sv[-1] if sv.size else np.inf


class TestGreedySamplingSet:
    def test_identity_rows_tie_break_to_lowest(self):
        gamma = np.zeros((6, 3))
        gamma[:3] = np.eye(3)
        gamma[3:] = np.eye(3)
        assert greedy_sampling_set(gamma, 3) == (0, 1, 2)

    def test_within_factor_two_of_exhaustive(self):
        for seed in range(6):
            n = 4 + seed % 5
            r = 1 + seed % 3
            gamma = _orthonormal(seed, n, min(r, n - 1))
            size = min(3, gamma.shape[1])
            chosen = greedy_sampling_set(gamma, size)
            best = min(_cond(gamma[list(s), :])
                       for s in itertools.combinations(range(n), size))
            assert _cond(gamma[list(chosen), :]) <= 2 * best + 1e-9

    def test_bad_size_rejected(self):
        with pytest.raises(ValueError):
            greedy_sampling_set(np.eye(3), 0)

    def test_bus39_set_is_rank_complete(self, surrogate39):
        sset = greedy_sampling_set(surrogate39, 10)
        sub = surrogate39.surrogate[list(sset), :]
        assert np.linalg.matrix_rank(sub) == 10


class TestReconstruction:
    def test_exact_sampling_theorem(self):
        gamma = _orthonormal(1, 10, 4)
        coeffs = np.random.default_rng(2).normal(size=(4, 60))
        x = gamma @ coeffs
        sset = greedy_sampling_set(gamma, 4)
        report = reconstruct_dynamics(gamma, sset, x[list(sset)], truth=x)
        assert report.rank_ok
        rel = np.linalg.norm(report.reconstructed - x) / np.linalg.norm(x)
        assert rel < 1e-8

    def test_rank_deficient_flagged(self):
        gamma = _orthonormal(3, 8, 4)
        x = gamma @ np.random.default_rng(4).normal(size=(4, 30))
        sset = greedy_sampling_set(gamma, 2)
        report = reconstruct_dynamics(gamma, sset, x[list(sset)], truth=x)
        assert not report.rank_ok
        assert report.rmse > 0

    def test_noise_scales_rmse_with_predicted_slope(self):
        # error propagation oracle: for noisy samples of bandlimited data,
        # rmse ~= sigma * ||pinv(Gamma_S)||_F / sqrt(N)
        gamma = _orthonormal(5, 12, 4)
        coeffs = np.random.default_rng(6).normal(size=(4, 4000))
        x = gamma @ coeffs
        sset = greedy_sampling_set(gamma, 4)
        pinv_norm = np.linalg.norm(np.linalg.pinv(gamma[list(sset), :]))
        rng = np.random.default_rng(7)
        rmses = []
        for sigma in (0.01, 0.02):
            noisy = x[list(sset)] + rng.normal(0, sigma, size=(4, 4000))
            report = reconstruct_dynamics(gamma, sset, noisy, truth=x)
            predicted = sigma * pinv_norm / math.sqrt(12)
            assert abs(report.rmse - predicted) < 0.1 * predicted
            rmses.append(report.rmse)
        assert abs(rmses[1] / rmses[0] - 2.0) < 0.2

    def test_greedy_growth_never_hurts(self):
        # more sampled nodes never increase the bandlimited recovery error
        gamma = _orthonormal(8, 10, 3)
        x = gamma @ np.random.default_rng(9).normal(size=(3, 100))
        errors = []
        for size in (2, 3, 5, 8):
            sset = greedy_sampling_set(gamma, size)
            report = reconstruct_dynamics(gamma, sset, x[list(sset)], truth=x)
            errors.append(report.rmse)
        assert all(b <= a + 1e-10 for a, b in zip(errors, errors[1:]))


class TestEveDecrypt:
    def test_perfect_recovery_breaks_security(self):
        rng = np.random.default_rng(10)
        row = rng.normal(size=400)
        bits = BitStream.random(400, seed=11)
        ciphertext = modulate_ook(bits, 1.0) + 0.9 * row
        estimate, ber = eve_decrypt(ciphertext, row, 0.9, bits, 1.0)
        assert ber == 0.0
        np.testing.assert_allclose(estimate, modulate_ook(bits, 1.0), atol=1e-12)

    def test_zero_recovery_equals_intercept_only(self):
        rng = np.random.default_rng(12)
        row = rng.normal(size=300)
        bits = BitStream.random(300, seed=13)
        ciphertext = modulate_ook(bits, 0.5) + row
        _, ber_none = eve_decrypt(ciphertext, None, 1.0, bits, 0.5)
        _, ber_zero = eve_decrypt(ciphertext, np.zeros(300), 1.0, bits, 0.5)
        assert ber_none == ber_zero


class TestJammingSchedule:
    def test_zero_rate_empty(self):
        proc = jamming_schedule(ActiveAttackConfig(0.0, 5.0, seed=1), 10, 5000, 1e-3)
        assert len(proc.injection_times) == 0

    def test_poisson_count(self):
        proc = jamming_schedule(ActiveAttackConfig(500.0, 5.0, seed=2), 39, 5000, 1e-3)
        expected = 500.0 * 5.0
        assert abs(len(proc.injection_times) - expected) < 3 * math.sqrt(expected)

    def test_amplitude_variance(self):
        proc = jamming_schedule(
            ActiveAttackConfig(500.0, 5.0, target_nodes=tuple(range(29)), seed=3),
            39, 5000, 1e-3)
        draws = proc.injection_amplitudes[:, :29].ravel()
        assert draws.size > 10_000
        assert abs(np.var(draws) - 5.0) < 0.1 * 5.0

    def test_times_strictly_increasing(self):
        proc = jamming_schedule(ActiveAttackConfig(800.0, 5.0, seed=4), 10, 3000, 1e-3)
        assert np.all(np.diff(proc.injection_times) > 0)
