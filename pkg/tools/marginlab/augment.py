"""
MarginLab - Weak and strong feature-space perturbations

Weak views add small Gaussian noise. Strong views apply, in order, a global
scale, per-coordinate dropout and larger Gaussian noise. Both work on a single
vector or a (batch, d) array; a batch gets one scale draw per row.
"""
from typing import Union

import numpy as np

from .config import AugmentSpec

Scale = Union[float, np.ndarray]


def feature_scale(features: np.ndarray, spec: AugmentSpec) -> np.ndarray:
    """Per-feature multiplier for the noise sds (training-feature sd, or ones)"""
    features = np.atleast_2d(features)
    if not spec.relative_to_feature_sd:
        return np.ones(features.shape[1])
    sd = features.std(axis=0)
    return np.where(sd > 0, sd, 1.0)


def weak(x: np.ndarray, spec: AugmentSpec, rng: np.random.Generator, scale: Scale = 1.0) -> np.ndarray:
    """x + N(0, (weak_noise_sd * scale)^2)"""
    x = np.asarray(x, dtype=np.float64)
    sd = spec.weak_noise_sd * np.asarray(scale, dtype=np.float64)
    return x + rng.standard_normal(x.shape) * sd


def strong(x: np.ndarray, spec: AugmentSpec, rng: np.random.Generator, scale: Scale = 1.0) -> np.ndarray:
    """Scale by u ~ U(scale_range), zero coordinates with prob p, add N(0, (strong_noise_sd * scale)^2)"""
    x = np.asarray(x, dtype=np.float64)
    lo, hi = spec.strong_scale_range
    row_shape = x.shape[:-1] + (1,)
    u = rng.uniform(lo, hi, size=row_shape)
    keep = rng.random(x.shape) >= spec.strong_dropout_p
    sd = spec.strong_noise_sd * np.asarray(scale, dtype=np.float64)
    return (x * u) * keep + rng.standard_normal(x.shape) * sd
