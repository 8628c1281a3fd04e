"""Shared fixtures; puts tools/ on the import path like the entry scripts do."""

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tools"))

from marginlab.config import DatasetSpec, TrainConfig  # noqa: E402


@pytest.fixture
def small_moons_spec():
    return DatasetSpec(name="two_moons", n=400, noise_sd=0.1, labels_per_class=4,
                       erroneous_frac=0.05, test_frac=0.2)


@pytest.fixture
def small_config(small_moons_spec):
    """A short MarginMatch run that finishes in well under a second"""
    def make(method="marginmatch", **overrides):
        data = dict(method=method, epochs=3, batch_size=8, nu=4, seed=3, dataset=small_moons_spec)
        data.update(overrides)
        return TrainConfig(**data)
    return make
