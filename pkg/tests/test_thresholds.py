"""Learning status, flexible thresholds and the trust threshold."""

import math

import numpy as np
import pytest

from marginlab.errors import ConfigurationError
from marginlab.thresholds import ThresholdState, apm_threshold, flexible_thresholds, learning_status


class TestLearningStatus:

    def test_counts_confident_predictions(self):
        alpha = learning_status([0.97, 0.80, 0.96, 0.99], [0, 0, 1, 0], 0.95, 2)
        assert alpha.tolist() == [2, 1]

    def test_nothing_confident(self):
        assert learning_status([0.5, 0.95], [0, 1], 0.95, 3).tolist() == [0, 0, 0]

    def test_small_tau_counts_everything(self):
        assert learning_status([0.5, 0.4, 0.6], [1, 1, 2], 1e-9, 3).tolist() == [0, 2, 1]

    def test_empty_record(self):
        assert learning_status([], [], 0.95, 2).tolist() == [0, 0]


class TestFlexibleThresholds:

    def test_scaled_by_best_class(self):
        np.testing.assert_allclose(flexible_thresholds([10, 40, 20], 0.95), [0.2375, 0.95, 0.475])

    def test_cold_start(self):
        assert flexible_thresholds([0, 0, 0], 0.9).tolist() == [0.9, 0.9, 0.9]

    def test_equal_counts(self):
        assert flexible_thresholds([5, 5], 0.8).tolist() == [0.8, 0.8]

    def test_matches_direct_evaluation(self):
        rng = np.random.default_rng(3)
        for _ in range(1000):
            alpha = rng.integers(0, 50, size=int(rng.integers(2, 8)))
            tau = float(rng.uniform(0.01, 1.0))
            top = max(alpha)
            expected = [tau if top == 0 else a / top * tau for a in alpha]
            np.testing.assert_allclose(flexible_thresholds(alpha, tau), expected, rtol=0, atol=1e-15)

    def test_scale_invariance(self):
        alpha = np.array([3, 9, 6])
        np.testing.assert_allclose(flexible_thresholds(alpha, 0.95), flexible_thresholds(alpha * 7, 0.95))


class TestApmThreshold:

    def test_twentieths(self):
        assert apm_threshold([0.05 * i for i in range(1, 21)], 0.95) == pytest.approx(0.95)

    def test_single_value(self):
        assert apm_threshold([-1.25], 0.3) == -1.25

    def test_median_rank(self):
        assert apm_threshold([4, 1, 3, 2], 0.5) == 2

    def test_empty_rejected(self):
        with pytest.raises(ConfigurationError):
            apm_threshold([], 0.95)

    def test_matches_sorted_oracle(self):
        rng = np.random.default_rng(4)
        for _ in range(1000):
            values = rng.normal(size=int(rng.integers(1, 60))).tolist()
            q = float(rng.choice([0.5, 0.9, 0.95, 0.99, float(rng.uniform(0.01, 0.99))]))
            ordered = sorted(values)
            rank = max(1, math.ceil(round(q * len(values), 9)))
            assert apm_threshold(values, q) == ordered[rank - 1]

    def test_monotone_in_q(self):
        values = np.random.default_rng(5).normal(size=37)
        qs = np.linspace(0.01, 0.99, 50)
        gammas = [apm_threshold(values, q) for q in qs]
        assert all(a <= b for a, b in zip(gammas, gammas[1:]))


class TestThresholdState:

    def test_defaults(self):
        state = ThresholdState(num_outputs=3)
        assert state.gamma == -math.inf
        assert state.flex.tolist() == [0.95, 0.95, 0.95]
