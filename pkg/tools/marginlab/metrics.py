"""
MarginLab - Pseudo-label quality accounting

Gold labels of the unlabeled pool are read here and nowhere else.
"""
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .dataflow import GoldOracle
from .io import CsvSink, parse_optional_float, read_csv_rows
from .types import EpochMetrics, MaskDecision

DECISION_COLUMNS = ["epoch", "batch", "id", "pseudo_label", "confidence",
                    "conf_gate", "apm_gate", "included"]

_INT_FIELDS = {"epoch", "seed", "included", "presentations"}
_STR_FIELDS = {"method"}
_REQUIRED_FLOATS = {"lr", "loss_s", "loss_u", "loss_e", "train_error"}


def mask_rate(decisions: Sequence[MaskDecision]) -> float:
    """Masked presentations / all unlabeled presentations"""
    if not decisions:
        raise ValueError("mask rate needs at least one decision")
    masked = sum(1 for d in decisions if not d.included)
    return masked / len(decisions)


def impurity(decisions: Sequence[MaskDecision], oracle: GoldOracle) -> Optional[float]:
    """Share of included presentations whose pseudo-label is wrong; None if none included"""
    included = [d for d in decisions if d.included]
    if not included:
        return None
    ids = np.array([d.example_id for d in included], dtype=np.int64)
    labels = np.array([d.pseudo_label for d in included], dtype=np.int64)
    gold = oracle.labels_of(ids)
    return float(np.mean(labels != gold))


def summarize_decisions(decisions: Sequence[MaskDecision],
                        oracle: GoldOracle) -> Tuple[Optional[float], Optional[float], int, int]:
    """(mask_rate, impurity, included count, presentations) for one epoch"""
    if not decisions:
        return None, None, 0, 0
    included = sum(1 for d in decisions if d.included)
    return mask_rate(decisions), impurity(decisions, oracle), included, len(decisions)


class PseudoLabelAudit:
    """Holds the gold oracle on the trainer's behalf; the trainer only sees the summaries"""

    def __init__(self, oracle: GoldOracle):
        self._oracle = oracle

    def __call__(self, decisions: Sequence[MaskDecision]) -> Tuple[Optional[float], Optional[float], int, int]:
        return summarize_decisions(decisions, self._oracle)


def score_percentiles(values: np.ndarray) -> Dict[str, Optional[float]]:
    """Mean, median and 95th percentile of the erroneous cohort's scores"""
    if values is None or len(values) == 0:
        return {"e_score_mean": None, "e_score_p50": None, "e_score_p95": None}
    v = np.asarray(values, dtype=np.float64)
    return {
        "e_score_mean": float(v.mean()),
        "e_score_p50": float(np.percentile(v, 50)),
        "e_score_p95": float(np.percentile(v, 95)),
    }


class MetricsSink:
    """metrics.csv writer: header in EpochMetrics field order, one flushed row per epoch"""

    def __init__(self, filepath: str):
        self._sink = CsvSink(filepath, EpochMetrics.columns())

    def append_epoch(self, row: EpochMetrics) -> None:
        self._sink.append(row.to_dict())

    def close(self) -> None:
        self._sink.close()

    def __enter__(self) -> "MetricsSink":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


class DecisionSink:
    """decisions.csv writer, one row per unlabeled presentation"""

    def __init__(self, filepath: str):
        self._sink = CsvSink(filepath, DECISION_COLUMNS)

    def append_batch(self, epoch: int, batch: int, decisions: Sequence[MaskDecision]) -> None:
        rows = []
        for d in decisions:
            row = d.to_dict()
            row.update(epoch=epoch, batch=batch)
            rows.append(row)
        self._sink.append_many(rows)

    def close(self) -> None:
        self._sink.close()


def ledger_columns(num_outputs: int) -> List[str]:
    return (["id", "epoch", "role"]
            + [f"apm_{c + 1}" for c in range(num_outputs)]
            + ["pseudo_label", "conf_gate", "apm_gate", "included", "gamma"])


class LedgerSink:
    """ledger.csv writer: accumulated score vectors per tracked example per epoch"""

    def __init__(self, filepath: str, num_outputs: int):
        self.num_outputs = num_outputs
        self._sink = CsvSink(filepath, ledger_columns(num_outputs))

    def append_rows(self,
                    epoch: int,
                    role: str,
                    ids: np.ndarray,
                    scores: np.ndarray,
                    gamma: Optional[float],
                    decisions: Optional[Dict[int, MaskDecision]] = None) -> None:
        rows = []
        for i, vec in zip(ids, np.atleast_2d(scores)):
            row = {"id": int(i), "epoch": epoch, "role": role, "gamma": gamma}
            for c in range(self.num_outputs):
                # entropy trackers keep a single column
                row[f"apm_{c + 1}"] = float(vec[c]) if c < len(vec) else None
            d = decisions.get(int(i)) if decisions else None
            if d is not None:
                row.update(pseudo_label=d.pseudo_label, conf_gate=d.conf_gate,
                           apm_gate=d.apm_gate, included=d.included)
            rows.append(row)
        self._sink.append_many(rows)

    def close(self) -> None:
        self._sink.close()


def read_metrics_csv(filepath: str) -> List[EpochMetrics]:
    """Rebuild EpochMetrics rows from metrics.csv"""
    out = []
    for raw in read_csv_rows(filepath):
        values = {}
        for name in EpochMetrics.columns():
            text = raw[name]
            if name in _INT_FIELDS:
                values[name] = int(text)
            elif name in _STR_FIELDS:
                values[name] = text
            elif name in _REQUIRED_FLOATS:
                values[name] = float(text)
            else:
                values[name] = parse_optional_float(text)
        out.append(EpochMetrics(**values))
    return out
