"""Weak and strong views."""

import numpy as np
import pytest
from pydantic import ValidationError

from marginlab.augment import feature_scale, strong, weak
from marginlab.config import AugmentSpec
from marginlab.dataflow import batches, build_dataset
from marginlab.io import read_csv_rows
from marginlab.metrics import DecisionSink
from marginlab.trainer import run

DRAWS = 10_000


class TestWeak:

    def test_zero_noise_is_identity(self):
        x = np.array([[0.5, -1.5], [2.0, 3.0]])
        out = weak(x, AugmentSpec(weak_noise_sd=0.0, strong_noise_sd=0.0), np.random.default_rng(0))
        np.testing.assert_array_equal(out, x)

    def test_fixed_rng_is_deterministic(self):
        x = np.ones((4, 2))
        spec = AugmentSpec()
        a = weak(x, spec, np.random.default_rng(3))
        b = weak(x, spec, np.random.default_rng(3))
        assert a.tobytes() == b.tobytes()

    def test_noise_follows_feature_scale(self):
        x = np.zeros((20000, 2))
        spec = AugmentSpec(weak_noise_sd=0.1)
        out = weak(x, spec, np.random.default_rng(1), scale=np.array([1.0, 10.0]))
        np.testing.assert_allclose(out.std(axis=0), [0.1, 1.0], rtol=0.05)

    def test_unbiased_displacement(self):
        rng = np.random.default_rng(11)
        x = rng.normal(size=(DRAWS, 2))
        d = weak(x, AugmentSpec(), rng) - x
        stderr = d.std(axis=0, ddof=1) / np.sqrt(DRAWS)
        assert np.all(np.abs(d.mean(axis=0)) < 3 * stderr)


class TestStrong:

    def test_degenerate_knobs_are_identity(self):
        spec = AugmentSpec(weak_noise_sd=0.0, strong_noise_sd=0.0, strong_dropout_p=0.0,
                           strong_scale_range=(1.0, 1.0))
        x = np.array([[0.3, -0.2], [1.0, 4.0]])
        np.testing.assert_array_equal(strong(x, spec, np.random.default_rng(0)), x)

    def test_full_dropout_zeroes(self):
        spec = AugmentSpec(weak_noise_sd=0.0, strong_noise_sd=0.0, strong_dropout_p=1.0)
        out = strong(np.array([[0.3, -0.2, 5.0]]), spec, np.random.default_rng(0))
        np.testing.assert_array_equal(out, 0.0)

    def test_one_scale_per_row(self):
        spec = AugmentSpec(weak_noise_sd=0.0, strong_noise_sd=0.0, strong_dropout_p=0.0)
        x = np.ones((50, 3))
        out = strong(x, spec, np.random.default_rng(2))
        assert np.all(out.max(axis=1) == out.min(axis=1))
        assert np.all((out >= 0.7) & (out <= 1.3))


class TestViewStrength:

    def test_strong_moves_further_than_weak(self):
        rng = np.random.default_rng(12)
        x = rng.normal(size=(DRAWS, 2))
        spec = AugmentSpec()
        weak_sq = ((weak(x, spec, rng) - x) ** 2).sum(axis=1).mean()
        strong_sq = ((strong(x, spec, rng) - x) ** 2).sum(axis=1).mean()
        assert strong_sq > weak_sq


class TestStreams:

    def test_augment_knobs_leave_batch_order_alone(self, small_config, tmp_path):
        knobs = [AugmentSpec(), AugmentSpec(weak_noise_sd=0.0, strong_noise_sd=0.6, strong_dropout_p=0.5)]
        orders = []
        for n, spec in enumerate(knobs):
            config = small_config(epochs=2, augment=spec)
            ds = build_dataset(config.dataset, config.seed)
            view = ds.training_view()
            plans = [p.to_dict() for e in (1, 2) for p in batches(view, config.batch_size, config.nu, config.seed, e)]
            path = tmp_path / f"decisions_{n}.csv"
            sink = DecisionSink(str(path))
            run(config, ds, decision_sink=sink)
            sink.close()
            seen = [(r["epoch"], r["batch"], r["id"]) for r in read_csv_rows(str(path))]
            orders.append((plans, seen))
        assert orders[0][0] == orders[1][0]
        assert orders[0][1] == orders[1][1]


class TestSpec:

    def test_strong_must_dominate_weak(self):
        with pytest.raises(ValidationError):
            AugmentSpec(weak_noise_sd=0.5, strong_noise_sd=0.1)

    def test_absolute_noise_ignores_feature_sd(self):
        spec = AugmentSpec(relative_to_feature_sd=False)
        np.testing.assert_array_equal(feature_scale(np.array([[0.0, 0.0], [10.0, 2.0]]), spec), [1.0, 1.0])

    def test_constant_feature_keeps_unit_scale(self):
        scale = feature_scale(np.array([[1.0, 0.0], [1.0, 2.0]]), AugmentSpec())
        np.testing.assert_array_equal(scale, [1.0, 1.0])
