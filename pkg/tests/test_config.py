"""Run spec loading and validation."""

import pytest

from marginlab.config import (
    RunSpec, TrainConfig, config_hash, flatten, load_run_spec, unflatten, validate_run_spec,
    with_override, write_run_spec,
)
from marginlab.errors import ConfigurationError
from marginlab.types import Combine, Measure, Method


def _write(tmp_path, text):
    path = tmp_path / "spec.yaml"
    path.write_text(text)
    return str(path)


class TestLoading:

    def test_defaults(self, tmp_path):
        spec = load_run_spec(_write(tmp_path, "method: marginmatch\n"))
        assert spec.method is Method.MARGINMATCH
        assert (spec.delta, spec.tau, spec.q, spec.nu, spec.batch_size) == (0.997, 0.95, 0.95, 7, 32)
        assert spec.measure is Measure.MARGIN and spec.combine is Combine.EMA
        assert spec.replicate_seeds() == [0]

    def test_dotted_keys(self, tmp_path):
        spec = load_run_spec(_write(tmp_path, "method: fixmatch\ndataset.name: blobs\ndataset.num_classes: 3\n"))
        assert spec.dataset.name == "blobs" and spec.dataset.num_classes == 3

    def test_missing_method_named(self, tmp_path):
        with pytest.raises(ConfigurationError) as info:
            load_run_spec(_write(tmp_path, "delta: 0.99\n"))
        assert info.value.key == "method"
        assert "method" in str(info.value)

    def test_unknown_key_named(self, tmp_path):
        with pytest.raises(ConfigurationError) as info:
            load_run_spec(_write(tmp_path, "method: marginmatch\nlearning_rate: 0.1\n"))
        assert info.value.key == "learning_rate"

    def test_unknown_prefix(self):
        with pytest.raises(ConfigurationError):
            unflatten({"optimizer.lr": 0.1})

    def test_nested_block_rejected(self):
        with pytest.raises(ConfigurationError):
            unflatten({"dataset": {"n": 10}})

    def test_out_of_range_value(self):
        with pytest.raises(ConfigurationError) as info:
            validate_run_spec({"method": "marginmatch", "delta": 1.5})
        assert info.value.key == "delta"

    def test_moons_are_binary(self):
        with pytest.raises(ConfigurationError):
            validate_run_spec({"method": "marginmatch", "dataset.num_classes": 3})

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError):
            load_run_spec(str(tmp_path / "nope.yaml"))


class TestRoundTrip:

    def test_write_then_load(self, tmp_path):
        spec = validate_run_spec({"method": "flexmatch", "seeds": [1, 2], "dataset.labels_per_class": 10,
                                  "augment.strong_scale_range": [0.8, 1.2]})
        path = tmp_path / "echo.yaml"
        write_run_spec(spec, str(path))
        assert load_run_spec(str(path)) == spec

    def test_flatten_inverts_unflatten(self):
        flat = {"method": "marginmatch", "dataset.n": 50, "network.hidden": [8]}
        assert flatten(unflatten(flat)) == flat


class TestHashing:

    def test_seed_does_not_change_hash(self):
        spec = validate_run_spec({"method": "marginmatch"})
        assert config_hash(spec.train_config(0)) == config_hash(spec.train_config(9))

    def test_knob_changes_hash(self):
        a = TrainConfig(method="marginmatch")
        b = TrainConfig(method="marginmatch", delta=0.99)
        assert config_hash(a) != config_hash(b)

    def test_override(self):
        spec = validate_run_spec({"method": "marginmatch"})
        changed = with_override(spec, "dataset.labels_per_class", 25)
        assert changed.dataset.labels_per_class == 25
        assert isinstance(changed, RunSpec)
