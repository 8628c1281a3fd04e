"""
MarginLab - Per-example training-dynamics accounting

Pseudo-margins of every class are accumulated across epochs, either as an
arithmetic mean or with the decaying-weight moving average

    apm <- pm * delta / (1 + t) + apm * (1 - delta / (1 + t))

where t is the epoch index. The same accumulator backs the confidence and
entropy trackers used in the measure ablation.
"""
import logging
from typing import Optional

import numpy as np

from .errors import LedgerError
from .nncore import softmax
from .types import Combine, Measure

logger = logging.getLogger(__name__)

DEFAULT_DELTA = 0.997


def pseudo_margin(logits: np.ndarray, c: int) -> float:
    """z_c - max_{i != c} z_i"""
    return float(pseudo_margins(np.asarray(logits, dtype=np.float64).reshape(-1))[0, c])


def pseudo_margins(logits: np.ndarray) -> np.ndarray:
    """Pseudo-margins for every class at once; same shape as ``logits``"""
    z = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    if z.shape[1] < 2:
        raise ValueError("pseudo-margin needs at least two logits")
    top2 = -np.partition(-z, 1, axis=1)[:, :2]
    first, second = top2[:, :1], top2[:, 1:2]
    is_top = np.arange(z.shape[1])[None, :] == z.argmax(axis=1)[:, None]
    return z - np.where(is_top, second, first)


def confidence_score(probs: np.ndarray) -> np.ndarray:
    """max(p); scalar for a vector, per row for a batch"""
    p = np.asarray(probs, dtype=np.float64)
    return p.max(axis=-1)


def entropy_score(probs: np.ndarray) -> np.ndarray:
    """-sum p ln p with 0 ln 0 := 0"""
    p = np.asarray(probs, dtype=np.float64)
    logs = np.log(np.where(p > 0, p, 1.0))
    return -(p * logs).sum(axis=-1)


class MarginLedger:
    """
    Accumulated per-class values for every example id.

    Each id may be updated at most once per epoch, with strictly increasing
    epoch indices. Never-updated entries read as 0.
    """

    def __init__(self,
                 num_examples: int,
                 num_outputs: int,
                 combine: Combine = Combine.EMA,
                 delta: float = DEFAULT_DELTA):
        if not 0.0 < delta <= 1.0:
            raise ValueError(f"delta must be in (0, 1], got {delta}")
        self.combine = Combine(combine)
        self.delta = delta
        self.num_outputs = num_outputs
        self.apm = np.zeros((num_examples, num_outputs))
        self.updates_seen = np.zeros(num_examples, dtype=np.int64)
        self.last_epoch = np.zeros(num_examples, dtype=np.int64)

    def record(self,
               ids: np.ndarray,
               values: np.ndarray,
               epoch: int,
               skip_seen: bool = False) -> np.ndarray:
        """
        Fold one row of ``values`` into each id's accumulator.

        Args:
            ids: Example ids, aligned with the rows of ``values``
            values: (len(ids), num_outputs) array
            epoch: 1-based epoch index
            skip_seen: Silently skip ids already updated this epoch (and repeats
                within ``ids``) instead of raising

        Returns:
            The ids that were updated
        """
        if epoch < 1:
            raise ValueError(f"epoch index must be >= 1, got {epoch}")
        ids = np.asarray(ids, dtype=np.int64)
        values = np.asarray(values, dtype=np.float64).reshape(len(ids), self.num_outputs)

        _, first = np.unique(ids, return_index=True)
        fresh = np.zeros(len(ids), dtype=bool)
        fresh[first] = True
        fresh &= self.last_epoch[ids] < epoch
        if not np.all(fresh):
            if not skip_seen:
                dup = int(ids[~fresh][0])
                raise LedgerError(f"example {dup} updated twice in epoch {epoch}")
            ids, values = ids[fresh], values[fresh]
        if len(ids) == 0:
            return ids

        if self.combine is Combine.EMA:
            w = self.delta / (1.0 + epoch)
            self.apm[ids] = values * w + self.apm[ids] * (1.0 - w)
        else:
            counts = (self.updates_seen[ids] + 1)[:, None]
            self.apm[ids] = self.apm[ids] + (values - self.apm[ids]) / counts
        self.updates_seen[ids] += 1
        self.last_epoch[ids] = epoch
        return ids

    def apm_update(self, ids: np.ndarray, logits: np.ndarray, epoch: int, skip_seen: bool = False) -> np.ndarray:
        """Record the pseudo-margins of all classes computed from ``logits``"""
        return self.record(ids, pseudo_margins(logits), epoch, skip_seen=skip_seen)

    def apm_query(self, example_id: int, c: int) -> float:
        if not 0 <= c < self.num_outputs:
            raise ValueError(f"class {c} out of range for {self.num_outputs} outputs")
        return float(self.apm[example_id, c])

    def values(self, ids: np.ndarray, classes: np.ndarray) -> np.ndarray:
        return self.apm[np.asarray(ids, dtype=np.int64), np.asarray(classes, dtype=np.int64)]

    def updated_in(self, ids: np.ndarray, epoch: int) -> np.ndarray:
        return self.last_epoch[np.asarray(ids, dtype=np.int64)] == epoch


class ScoreTracker:
    """
    Accumulated trust score per example for one measure.

    Margin and confidence keep one value per class (confidence tracks the
    per-class probability, which equals max(p) at the argmax); entropy keeps a
    single value. ``gate_values`` negates entropy so that larger always means
    more trustworthy.
    """

    def __init__(self,
                 measure: Measure,
                 combine: Combine,
                 delta: float,
                 num_examples: int,
                 num_outputs: int):
        self.measure = Measure(measure)
        width = 1 if self.measure is Measure.ENTROPY else num_outputs
        self.ledger = MarginLedger(num_examples, width, combine, delta)
        self.num_outputs = num_outputs

    def observe(self, ids: np.ndarray, logits: np.ndarray, epoch: int, skip_seen: bool = False) -> np.ndarray:
        logits = np.atleast_2d(logits)
        if self.measure is Measure.MARGIN:
            values = pseudo_margins(logits)
        elif self.measure is Measure.CONFIDENCE:
            values = softmax(logits)
        else:
            values = entropy_score(softmax(logits))[:, None]
        return self.ledger.record(ids, values, epoch, skip_seen=skip_seen)

    def scores(self, ids: np.ndarray, classes: Optional[np.ndarray] = None) -> np.ndarray:
        ids = np.asarray(ids, dtype=np.int64)
        if self.measure is Measure.ENTROPY:
            return self.ledger.values(ids, np.zeros(len(ids), dtype=np.int64))
        if classes is None:
            raise ValueError("classes are required for per-class measures")
        return self.ledger.values(ids, classes)

    def gate_values(self, ids: np.ndarray, classes: Optional[np.ndarray] = None) -> np.ndarray:
        s = self.scores(ids, classes)
        return -s if self.measure is Measure.ENTROPY else s

    def score_vectors(self, ids: np.ndarray) -> np.ndarray:
        """Full accumulated rows (for ledger dumps)"""
        return self.ledger.apm[np.asarray(ids, dtype=np.int64)]
