"""
MarginLab - Run configuration models and run spec file loading

Run spec files are flat YAML mappings. Dataset, augmentation and network
settings use one level of dotted prefixes, e.g. ``dataset.noise_sd: 0.25``.
"""
import hashlib
import json
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigurationError
from .types import Combine, Measure, Method

NESTED_PREFIXES = ("dataset", "augment", "network")

# Keys cmd_sweep may vary, mapped to their dotted config path
SWEEPABLE_KEYS = {
    "delta": "delta",
    "tau": "tau",
    "q": "q",
    "labels_per_class": "dataset.labels_per_class",
    "measure": "measure",
    "combine": "combine",
    "method": "method",
}


class _StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class DatasetSpec(_StrictModel):
    """Synthetic dataset and split settings"""
    name: Literal["two_moons", "blobs", "rings"] = "two_moons"
    n: int = Field(1320, ge=2)
    num_classes: int = Field(2, ge=2)
    noise_sd: float = Field(0.25, ge=0.0)
    spread: float = Field(0.5, ge=0.0)
    labels_per_class: int = Field(4, ge=1)
    erroneous_frac: float = Field(0.05, gt=0.0, lt=1.0)
    test_frac: float = Field(0.2, ge=0.0, lt=1.0)
    label_noise: float = Field(0.0, ge=0.0, lt=1.0)

    @model_validator(mode="after")
    def _moons_are_binary(self) -> "DatasetSpec":
        if self.name == "two_moons" and self.num_classes != 2:
            raise ValueError("two_moons has exactly 2 classes")
        return self


class AugmentSpec(_StrictModel):
    """Weak/strong perturbation knobs.

    Noise sds are multiples of the per-feature training sd when
    ``relative_to_feature_sd`` is set, absolute otherwise.
    """
    weak_noise_sd: float = Field(0.05, ge=0.0)
    strong_noise_sd: float = Field(0.25, ge=0.0)
    strong_dropout_p: float = Field(0.2, ge=0.0, le=1.0)
    strong_scale_range: Tuple[float, float] = (0.7, 1.3)
    relative_to_feature_sd: bool = True

    @model_validator(mode="after")
    def _check_order(self) -> "AugmentSpec":
        if self.strong_noise_sd < self.weak_noise_sd:
            raise ValueError("strong_noise_sd must be >= weak_noise_sd")
        lo, hi = self.strong_scale_range
        if lo > hi:
            raise ValueError("strong_scale_range must be (low, high) with low <= high")
        return self


class NetworkSpec(_StrictModel):
    hidden: List[int] = Field(default_factory=lambda: [32, 32])

    @model_validator(mode="after")
    def _positive(self) -> "NetworkSpec":
        if any(h < 1 for h in self.hidden):
            raise ValueError("hidden layer sizes must be positive")
        return self


class TrainConfig(_StrictModel):
    """Every hyperparameter and design knob of one training run"""
    method: Method
    measure: Measure = Measure.MARGIN
    combine: Combine = Combine.EMA
    delta: float = Field(0.997, gt=0.0, le=1.0)
    tau: float = Field(0.95, gt=0.0, le=1.0)
    q: float = Field(0.95, gt=0.0, lt=1.0)
    batch_size: int = Field(32, ge=1)
    nu: int = Field(7, ge=1)
    lam: float = Field(1.0, ge=0.0)
    epochs: int = Field(200, ge=1)
    base_lr: float = Field(0.03, gt=0.0)
    momentum: float = Field(0.9, ge=0.0, lt=1.0)
    total_steps: Optional[int] = Field(None, ge=1)
    seed: int = 0
    normalize_sums: bool = False
    show_progress: bool = False
    dataset: DatasetSpec = Field(default_factory=DatasetSpec)
    augment: AugmentSpec = Field(default_factory=AugmentSpec)
    network: NetworkSpec = Field(default_factory=NetworkSpec)


class RunSpec(TrainConfig):
    """A run spec file: a TrainConfig plus output settings and replicate seeds"""
    output_dir: str = "runs"
    seeds: Optional[List[int]] = None
    dump_ledger: bool = False
    dump_decisions: bool = True

    def replicate_seeds(self) -> List[int]:
        return list(self.seeds) if self.seeds else [self.seed]

    def train_config(self, seed: Optional[int] = None) -> TrainConfig:
        data = self.model_dump(include=set(TrainConfig.model_fields))
        if seed is not None:
            data["seed"] = seed
        return TrainConfig.model_validate(data)


def unflatten(flat: Dict[str, Any]) -> Dict[str, Any]:
    """Turn ``{"dataset.n": 10}`` into ``{"dataset": {"n": 10}}`` (one level only)"""
    nested: Dict[str, Any] = {}
    for key, value in flat.items():
        if not isinstance(key, str):
            raise ConfigurationError(f"config keys must be strings, got {key!r}", key=str(key))
        if "." not in key:
            if key in NESTED_PREFIXES:
                raise ConfigurationError(f"use dotted keys like '{key}.<name>' instead of a nested block", key=key)
            nested[key] = value
            continue
        prefix, _, name = key.partition(".")
        if prefix not in NESTED_PREFIXES or not name or "." in name:
            raise ConfigurationError(f"unknown config key '{key}'", key=key)
        nested.setdefault(prefix, {})[name] = value
    return nested


def flatten(data: Dict[str, Any]) -> Dict[str, Any]:
    """Inverse of unflatten for a model_dump() dict"""
    flat: Dict[str, Any] = {}
    for key, value in data.items():
        if key in NESTED_PREFIXES and isinstance(value, dict):
            for name, inner in value.items():
                flat[f"{key}.{name}"] = inner
        else:
            flat[key] = value
    return flat


def _first_error_key(exc: ValidationError) -> str:
    err = exc.errors()[0]
    return ".".join(str(part) for part in err["loc"]) or "<root>"


def validate_run_spec(flat: Dict[str, Any]) -> RunSpec:
    """
    Validate a flat mapping into a RunSpec.

    Raises:
        ConfigurationError: naming the first offending key
    """
    try:
        return RunSpec.model_validate(unflatten(flat))
    except ValidationError as exc:
        key = _first_error_key(exc)
        err = exc.errors()[0]
        raise ConfigurationError(f"invalid config key '{key}': {err['msg']}", key=key) from exc


def load_run_spec(path: str) -> RunSpec:
    """Load and validate a YAML run spec file"""
    try:
        with open(path, "r") as f:
            raw = yaml.safe_load(f)
    except FileNotFoundError as exc:
        raise ConfigurationError(f"config file not found: {path}") from exc
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"config file is not valid YAML: {exc}") from exc

    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigurationError("config file must contain a key-value mapping")
    return validate_run_spec(raw)


def with_override(spec: RunSpec, dotted_key: str, value: Any) -> RunSpec:
    """Copy of ``spec`` with one flat key replaced, re-validated"""
    flat = flatten(spec.model_dump(mode="json"))
    flat[dotted_key] = value
    return validate_run_spec(flat)


def config_hash(config: TrainConfig) -> str:
    """Short stable digest of everything except the seed"""
    payload = config.model_dump(mode="json", exclude={"seed", "show_progress"})
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:10]


def write_run_spec(spec: RunSpec, path: str) -> None:
    """Write a spec back out as flat YAML"""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    flat = flatten(spec.model_dump(mode="json"))
    with open(path, "w") as f:
        yaml.safe_dump(flat, f, sort_keys=True)
