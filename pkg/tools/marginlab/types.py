"""
MarginLab - Type definitions and data structures
"""
from dataclasses import dataclass, fields
from enum import Enum, IntEnum
from typing import Any, Dict, List, Optional

import numpy as np


class Split(IntEnum):
    """Split tag codes"""
    LABELED = 0
    UNLABELED = 1
    ERRONEOUS = 2   # held aside, trained toward the virtual class
    TEST = 3


SPLIT_NAMES = {
    Split.LABELED: "labeled",
    Split.UNLABELED: "unlabeled",
    Split.ERRONEOUS: "erroneous",
    Split.TEST: "test",
}


class Method(str, Enum):
    SUPERVISED = "supervised"
    PSEUDO_LABEL = "pseudolabel"
    FIXMATCH = "fixmatch"
    FLEXMATCH = "flexmatch"
    MARGINMATCH = "marginmatch"


class Measure(str, Enum):
    """Per-example quantity accumulated across epochs for the trust gate"""
    MARGIN = "margin"
    CONFIDENCE = "confidence"
    ENTROPY = "entropy"


class Combine(str, Enum):
    AVG = "avg"   # arithmetic mean over epochs
    EMA = "ema"   # decaying-weight moving average


@dataclass(frozen=True, eq=False)
class BatchPlan:
    """Example ids drawn for one optimizer step"""
    labeled_ids: np.ndarray
    unlabeled_ids: np.ndarray
    erroneous_ids: np.ndarray

    def to_dict(self) -> Dict[str, List[int]]:
        return {
            "labeled_ids": self.labeled_ids.tolist(),
            "unlabeled_ids": self.unlabeled_ids.tolist(),
            "erroneous_ids": self.erroneous_ids.tolist(),
        }


@dataclass
class MaskDecision:
    """Gate outcome for one unlabeled presentation"""
    example_id: int
    pseudo_label: int
    confidence: float
    conf_gate: bool
    apm_gate: bool = True
    included: bool = False

    def to_dict(self) -> Dict[str, Any]:
        return {
            "id": self.example_id,
            "pseudo_label": self.pseudo_label,
            "confidence": self.confidence,
            "conf_gate": self.conf_gate,
            "apm_gate": self.apm_gate,
            "included": self.included,
        }


@dataclass
class EpochMetrics:
    """One row of metrics.csv; field order is the column order"""
    epoch: int
    method: str
    seed: int
    lr: float
    loss_s: float
    loss_u: float
    loss_e: float
    mask_rate: Optional[float]
    impurity: Optional[float]
    included: int
    presentations: int
    train_error: float
    test_error: Optional[float]
    gamma: Optional[float] = None
    e_score_mean: Optional[float] = None
    e_score_p50: Optional[float] = None
    e_score_p95: Optional[float] = None

    @classmethod
    def columns(cls) -> List[str]:
        return [f.name for f in fields(cls)]

    def to_dict(self) -> Dict[str, Any]:
        return {name: getattr(self, name) for name in self.columns()}
