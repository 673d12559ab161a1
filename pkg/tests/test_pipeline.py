import math

import numpy as np
import pytest
from scipy.stats import norm

from glsim.pipeline import (BitStream, decrypt, demodulate_and_ber, encrypt,
                            modulate_ook, relay_process, transmit)
from glsim.secrecy import RelayPlan, SecrecyReport


def _plan(weights, tx, rx):
    weights = np.asarray(weights, dtype=float)
    relays = tuple(int(i) for i in np.nonzero(weights)[0] if i not in (tx, rx))
    return RelayPlan(tx, rx, weights, relays, 0.0, 0.0,
                     SecrecyReport(0, 0, 0, 0), ())


class TestModulate:
    def test_definition(self):
        np.testing.assert_array_equal(modulate_ook([1, 0, 1], 2.0), [2.0, 0.0, 2.0])

    def test_length_preserved(self):
        bits = BitStream.random(5000, seed=0)
        assert len(modulate_ook(bits, 1.0)) == 5000

    def test_empty(self):
        assert len(modulate_ook([], 1.0)) == 0

    def test_bad_amplitude(self):
        with pytest.raises(ValueError):
            modulate_ook([1], 0.0)


class TestStages:
    def test_zero_row_is_identity(self):
        sig = np.array([1.0, 2.0])
        np.testing.assert_array_equal(encrypt(sig, np.zeros(2), 1.0), sig)

    def test_zero_signal_passes_row(self):
        row = np.array([0.3, -0.1])
        np.testing.assert_array_equal(encrypt(np.zeros(2), row, 2.0), 2.0 * row)

    def test_zero_weight_relay_is_identity(self):
        c = np.array([0.5, 0.6])
        np.testing.assert_array_equal(relay_process(c, np.array([9.0, 9.0]), 0.0), c)

    def test_relay_order_commutes(self):
        rng = np.random.default_rng(0)
        c = rng.normal(size=10)
        r1, r2 = rng.normal(size=10), rng.normal(size=10)
        a = relay_process(relay_process(c, r1, 0.4), r2, -0.7)
        b = relay_process(relay_process(c, r2, -0.7), r1, 0.4)
        # addition commutes; float summation order costs at most an ulp
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-14)

    def test_single_relay_delta(self):
        rng = np.random.default_rng(1)
        c, row = rng.normal(size=50), rng.normal(size=50)
        out = relay_process(c, row, 0.37)
        np.testing.assert_allclose(out - c, 0.37 * row, atol=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="length"):
            decrypt(np.zeros(3), np.zeros(4), 1.0)


class TestTransmit:
    def test_telescoping_identity(self):
        # estimate - plaintext == weighted sum of the participating rows,
        # exactly, for arbitrary (noisy) rows
        rng = np.random.default_rng(2)
        rows = rng.normal(size=(6, 200))
        weights = np.array([1.0, 0.0, -0.8, 0.3, 0.0, 1.0])
        plan = _plan(weights, tx=0, rx=5)
        bits = BitStream.random(200, seed=3)
        rec = transmit(plan, rows, bits, amplitude=1.0)
        expected = sum(weights[i] * rows[i] for i in (0, 2, 3, 5))
        np.testing.assert_allclose(rec.residual(), expected, rtol=0, atol=1e-12)
        assert len(rec.stages) == len(plan.relay_set) + 1

    def test_exact_dependency_round_trip(self):
        # rows that sum to zero under the weights decrypt perfectly
        rng = np.random.default_rng(4)
        rows = rng.normal(size=(4, 100))
        rows[3] = -(rows[0] - 0.5 * rows[1] + 2.0 * rows[2])
        weights = np.array([1.0, -0.5, 2.0, 1.0])
        plan = _plan(weights, tx=0, rx=3)
        bits = BitStream.random(100, seed=5)
        rec = transmit(plan, rows, bits, amplitude=0.4)
        np.testing.assert_allclose(rec.estimate, rec.plaintext, atol=1e-9)
        assert demodulate_and_ber(rec.estimate, bits, 0.4) == 0.0

    def test_missing_relay_breaks_round_trip(self):
        rng = np.random.default_rng(6)
        rows = rng.normal(size=(3, 50))
        rows[2] = -(rows[0] + 0.7 * rows[1])
        full = _plan(np.array([1.0, 0.7, 1.0]), tx=0, rx=2)
        partial = _plan(np.array([1.0, 0.0, 1.0]), tx=0, rx=2)
        bits = BitStream.random(50, seed=7)
        assert np.linalg.norm(transmit(full, rows, bits, 1.0).residual()) < 1e-9
        assert np.linalg.norm(transmit(partial, rows, bits, 1.0).residual()) > 0

    def test_noise_law(self):
        # residual variance approaches |alpha|^2 sigma^2 at L = 5000
        rng = np.random.default_rng(8)
        sigma2 = 1e-4
        weights = np.array([1.0, -1.3, 0.6, 1.0])
        rows = rng.normal(0.0, math.sqrt(sigma2), size=(4, 5000))
        plan = _plan(weights, tx=0, rx=3)
        bits = BitStream.random(5000, seed=9)
        rec = transmit(plan, rows, bits, amplitude=1.0)
        predicted = float(weights @ weights) * sigma2
        measured = float(np.var(rec.residual()))
        assert abs(measured - predicted) < 0.1 * predicted


class TestDemodulate:
    def test_exact_signal_zero_ber(self):
        bits = BitStream.random(64, seed=10)
        assert demodulate_and_ber(modulate_ook(bits, 2.0), bits, 2.0) == 0.0

    def test_inverted_signal_full_ber(self):
        bits = BitStream.random(64, seed=11)
        inverted = 2.0 - modulate_ook(bits, 2.0)
        assert demodulate_and_ber(inverted, bits, 2.0) == 1.0

    def test_gaussian_residual_matches_q_function(self):
        # analytic oracle: threshold detection under Gaussian residual has
        # error probability Q(A / (2 sigma))
        rng = np.random.default_rng(12)
        amplitude, sigma = 1.0, 0.4
        n = 200_000
        bits = BitStream(rng.integers(0, 2, size=n, dtype=np.uint8))
        estimate = modulate_ook(bits, amplitude) + rng.normal(0, sigma, size=n)
        predicted = norm.sf(amplitude / (2 * sigma))
        se = math.sqrt(predicted * (1 - predicted) / n)
        assert abs(demodulate_and_ber(estimate, bits, amplitude) - predicted) < 3 * se

    def test_ber_bounds_and_determinism(self):
        bits = BitStream.random(1000, seed=13)
        noisy = modulate_ook(bits, 1.0) + np.random.default_rng(14).normal(0, 1.0, 1000)
        ber = demodulate_and_ber(noisy, bits, 1.0)
        assert 0.0 <= ber <= 1.0
        assert demodulate_and_ber(noisy, bits, 1.0) == ber


def test_bitstream_validation():
    with pytest.raises(ValueError):
        BitStream(np.array([0, 2, 1]))
    assert len(BitStream.random(10, seed=0)) == 10
