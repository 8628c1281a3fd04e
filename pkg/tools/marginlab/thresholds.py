"""
MarginLab - Confidence thresholds and the erroneous-cohort trust threshold
"""
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

import numpy as np

from .errors import ConfigurationError

DEFAULT_TAU = 0.95
DEFAULT_PERCENTILE = 0.95


@dataclass
class ThresholdState:
    """Fixed threshold tau, per-class flexible thresholds T and gamma"""
    num_outputs: int
    tau: float = DEFAULT_TAU
    q: float = DEFAULT_PERCENTILE
    gamma: float = -math.inf
    flex: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        if self.flex is None:
            self.flex = np.full(self.num_outputs, self.tau)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "tau": self.tau,
            "q": self.q,
            "gamma": self.gamma,
            "flex": [float(t) for t in self.flex],
        }


def learning_status(confidences: np.ndarray,
                    argmaxes: np.ndarray,
                    tau: float,
                    num_outputs: int) -> np.ndarray:
    """
    Count confident predictions per class.

    Args:
        confidences: max probability of each recorded weak-view prediction
        argmaxes: predicted class of each record
        tau: Fixed confidence threshold
        num_outputs: C+1

    Returns:
        alpha, integer counts of length num_outputs
    """
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"tau must be in (0, 1], got {tau}")
    confidences = np.asarray(confidences, dtype=np.float64)
    argmaxes = np.asarray(argmaxes, dtype=np.int64)
    passed = argmaxes[confidences > tau]
    return np.bincount(passed, minlength=num_outputs).astype(np.int64)


def flexible_thresholds(alpha: np.ndarray, tau: float) -> np.ndarray:
    """T_c = alpha_c / max(alpha) * tau; all tau when nothing passed yet"""
    alpha = np.asarray(alpha, dtype=np.float64)
    if np.any(alpha < 0):
        raise ValueError("learning status counts must be non-negative")
    top = alpha.max() if alpha.size else 0.0
    if top == 0:
        return np.full(alpha.shape, float(tau))
    return alpha / top * tau


def apm_threshold(values: np.ndarray, q: float = DEFAULT_PERCENTILE) -> float:
    """Nearest-rank percentile: ascending sort, 1-indexed rank ceil(q*n)"""
    v = np.sort(np.asarray(values, dtype=np.float64).ravel())
    if v.size == 0:
        raise ConfigurationError("the erroneous cohort is empty; cannot set the trust threshold",
                                 key="dataset.erroneous_frac")
    rank = math.ceil(round(q * v.size, 9))
    rank = min(max(rank, 1), v.size)
    return float(v[rank - 1])
