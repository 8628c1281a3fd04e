"""Full-length two-moons runs: error, impurity and smoothing-sweep behaviour.

These train 200 epochs per seed and are marked slow.
"""

import statistics

import pytest

from marginlab.config import DatasetSpec, TrainConfig
from marginlab.dataflow import build_dataset
from marginlab.trainer import run

SEEDS = [0, 1, 2, 3, 4]
DELTAS = [0.95, 0.99, 0.995, 0.997, 0.999, 1.0]


def _moons(label_noise=0.0):
    return DatasetSpec(name="two_moons", n=1320, noise_sd=0.25, labels_per_class=4, label_noise=label_noise)


def _config(method, seed, label_noise=0.0, **overrides):
    return TrainConfig(method=method, seed=seed, epochs=200, dataset=_moons(label_noise), **overrides)


def _tail_mean(values, n=10):
    present = [v for v in values[-n:] if v is not None]
    return sum(present) / len(present) if present else 0.0


@pytest.mark.slow
class TestTwoMoons:

    def test_unlabeled_pool_size(self):
        sizes = build_dataset(_moons(), 0).split_sizes()
        assert sizes["labeled"] == 8
        assert sizes["unlabeled"] + sizes["erroneous"] == 1048

    def test_marginmatch_beats_supervised(self):
        supervised = [run(_config("supervised", s)).final_test_error for s in SEEDS]
        marginmatch = [run(_config("marginmatch", s)).final_test_error for s in SEEDS]
        assert statistics.median(marginmatch) < statistics.median(supervised)

    def test_impurity_not_above_flexmatch(self):
        wins = 0
        for seed in SEEDS:
            flex = run(_config("flexmatch", seed, label_noise=0.1)).metrics
            margin = run(_config("marginmatch", seed, label_noise=0.1)).metrics
            if _tail_mean([m.impurity for m in margin]) <= _tail_mean([m.impurity for m in flex]):
                wins += 1
        assert wins >= 4

    def test_mean_mode_rarely_best(self):
        mean_best = 0
        for seed in SEEDS:
            errors = {}
            for delta in DELTAS:
                combine = "avg" if delta == 1.0 else "ema"
                errors[delta] = run(_config("marginmatch", seed, delta=delta, combine=combine)).final_test_error
            if errors[1.0] < min(v for d, v in errors.items() if d != 1.0):
                mean_best += 1
        assert mean_best <= len(SEEDS) // 2
