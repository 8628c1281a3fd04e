"""CSV cells and run summaries."""

import math

from marginlab.io import SUMMARY_TAIL_EPOCHS, CsvSink, create_summary, format_cell, load_json, read_csv_rows, save_json


class TestFormatCell:

    def test_cells(self):
        assert format_cell(None) == ""
        assert format_cell(True) == "1"
        assert format_cell(0.1) == "0.1"
        assert format_cell(-math.inf) == "-inf"
        assert format_cell(7) == "7"


class TestCsvSink:

    def test_missing_columns_left_empty(self, tmp_path):
        path = tmp_path / "out.csv"
        with CsvSink(str(path), ["a", "b"]) as sink:
            sink.append({"a": 1})
        assert read_csv_rows(str(path)) == [{"a": "1", "b": ""}]


class TestSummary:

    def test_tail_means(self):
        metrics = [{"mask_rate": 1.0, "impurity": None, "test_error": 0.5, "train_error": 0.0, "gamma": None}] * 5
        metrics += [{"mask_rate": 0.2, "impurity": 0.1, "test_error": 0.1, "train_error": 0.0, "gamma": 1.5}] \
            * SUMMARY_TAIL_EPOCHS
        summary = create_summary(metrics, {"method": "marginmatch"}, {"labeled": 8}, "1.0.0")
        assert summary["epochs_run"] == 5 + SUMMARY_TAIL_EPOCHS
        tail = summary["tail"]
        assert tail["mask_rate"] == 0.2 and tail["impurity"] == 0.1
        assert summary["final"]["gamma"] == 1.5
        assert not summary["aborted"]

    def test_infinite_gamma_serialized(self, tmp_path):
        summary = create_summary([{"gamma": -math.inf, "test_error": None}], {}, {}, "1.0.0", aborted=True)
        save_json(summary, str(tmp_path / "summary.json"))
        assert load_json(str(tmp_path / "summary.json"))["final"]["gamma"] == "-inf"

    def test_no_wall_clock_fields(self):
        summary = create_summary([], {}, {}, "1.0.0")
        assert "wall_clock_sec" not in summary and summary["final"]["test_error"] is None
