"""
MarginLab - I/O utilities for run artifacts
"""
import csv
import json
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

# Epochs averaged for the end-of-run summary figures
SUMMARY_TAIL_EPOCHS = 10


def save_json(data: Any, filepath: str, indent: int = 2) -> None:
    """Save data as formatted JSON (keys sorted so reruns are byte-identical)"""
    Path(filepath).parent.mkdir(parents=True, exist_ok=True)
    with open(filepath, 'w') as f:
        json.dump(data, f, indent=indent, sort_keys=True)
        f.write("\n")


def load_json(filepath: str) -> Any:
    """Load JSON file"""
    with open(filepath, 'r') as f:
        return json.load(f)


def format_cell(value: Any) -> str:
    """CSV cell text: empty for missing, exact repr for floats, 0/1 for booleans"""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def parse_optional_float(text: str) -> Optional[float]:
    return None if text == "" else float(text)


class CsvSink:
    """Append-only CSV with a fixed header, flushed after every row"""

    def __init__(self, filepath: str, columns: Sequence[str]):
        self.filepath = filepath
        self.columns = list(columns)
        Path(filepath).parent.mkdir(parents=True, exist_ok=True)
        self._file = open(filepath, 'w', newline='')
        self._writer = csv.writer(self._file, lineterminator="\n")
        self._writer.writerow(self.columns)
        self._file.flush()

    def append(self, row: Dict[str, Any]) -> None:
        self._writer.writerow([format_cell(row.get(col)) for col in self.columns])
        self._file.flush()

    def append_many(self, rows: Sequence[Dict[str, Any]]) -> None:
        for row in rows:
            self._writer.writerow([format_cell(row.get(col)) for col in self.columns])
        self._file.flush()

    def close(self) -> None:
        if not self._file.closed:
            self._file.close()

    def __enter__(self) -> "CsvSink":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def read_csv_rows(filepath: str) -> List[Dict[str, str]]:
    """Load a CSV into a list of string dicts"""
    with open(filepath, 'r', newline='') as f:
        return list(csv.DictReader(f))


def read_csv_header(filepath: str) -> List[str]:
    with open(filepath, 'r', newline='') as f:
        return next(csv.reader(f), [])


def _tail_mean(values: List[Optional[float]]) -> Optional[float]:
    present = [v for v in values[-SUMMARY_TAIL_EPOCHS:] if v is not None]
    if not present:
        return None
    return float(np.mean(present))


def create_summary(
    metrics: List[Dict[str, Any]],
    config: Dict[str, Any],
    split_sizes: Dict[str, int],
    tool_version: str,
    aborted: bool = False
) -> Dict[str, Any]:
    """
    Create summary statistics for a training run.

    Args:
        metrics: Per-epoch metric dicts, in epoch order
        config: Configuration echo
        split_sizes: Example count per split
        tool_version: Package version that produced the run
        aborted: Whether the run stopped before its last epoch

    Returns:
        Summary dict (no wall-clock fields, so reruns are byte-identical)
    """
    final = metrics[-1] if metrics else {}
    gamma = final.get("gamma")
    if gamma is not None and math.isinf(gamma):
        gamma = str(gamma)

    return {
        "tool_version": tool_version,
        "config": config,
        "split_sizes": split_sizes,
        "epochs_run": len(metrics),
        "aborted": aborted,
        "final": {
            "test_error": final.get("test_error"),
            "train_error": final.get("train_error"),
            "gamma": gamma,
        },
        "tail": {
            "epochs": min(SUMMARY_TAIL_EPOCHS, len(metrics)),
            "mask_rate": _tail_mean([m.get("mask_rate") for m in metrics]),
            "impurity": _tail_mean([m.get("impurity") for m in metrics]),
            "test_error": _tail_mean([m.get("test_error") for m in metrics]),
        },
    }
