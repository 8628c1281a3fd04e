"""
MarginLab - Experiment harness: run, sweep, compare, plot

Exit codes: 0 success, 2 usage/config error, 1 runtime failure.
"""
import argparse
import logging
import os
import shutil
import sys
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import yaml
from pydantic import ValidationError

from . import __version__
from .config import (
    SWEEPABLE_KEYS, RunSpec, TrainConfig, config_hash, load_run_spec, with_override, write_run_spec,
)
from .dataflow import build_dataset, export_csv
from .errors import ConfigurationError, MarginLabError
from .io import CsvSink, create_summary, read_csv_header, read_csv_rows, save_json
from .metrics import DecisionSink, LedgerSink, MetricsSink, read_metrics_csv
from .svg import Series, write_line_chart_svg
from .trainer import run as train
from .types import Combine, Method

logger = logging.getLogger(__name__)

OUTPUT_ROOT_ENV = "MARGINLAB_OUTPUT_ROOT"

PLOT_KINDS = {
    "error_curve": ["epoch", "test_error"],
    "mask_impurity": ["epoch", "mask_rate", "impurity"],
    "apm_trace": ["id", "epoch", "gamma", "apm_1"],
}

AGGREGATE_COLUMNS = ["param", "value", "seed", "method", "final_test_error",
                     "mask_rate_tail", "impurity_tail", "run_dir"]
COMPARISON_COLUMNS = ["method", "seed", "epoch", "mask_rate", "impurity", "test_error", "gamma"]


def output_root(spec: RunSpec) -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_ENV) or spec.output_dir)


def run_dir_name(config: TrainConfig) -> str:
    return f"{config_hash(config)}_s{config.seed}"


def _prepare_dir(run_dir: Path, overwrite: bool) -> None:
    if run_dir.exists() and any(run_dir.iterdir()):
        if not overwrite:
            raise ConfigurationError(f"output directory {run_dir} exists and is not empty (pass --overwrite)",
                                     key="output_dir")
        shutil.rmtree(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)


def execute_run(spec: RunSpec, seed: int, run_dir: Path, overwrite: bool = False) -> Dict[str, Any]:
    """
    Train one (spec, seed) pair and write its artifacts.

    Writes config.yaml, config.json, split.csv, metrics.csv, summary.json and,
    when enabled, decisions.csv and ledger.csv into ``run_dir``.

    Returns:
        The summary dict
    """
    config = spec.train_config(seed)
    _prepare_dir(run_dir, overwrite)

    echo = {"tool_version": __version__, "config": config.model_dump(mode="json")}
    save_json(echo, str(run_dir / "config.json"))
    write_run_spec(spec.model_copy(update={"seed": seed, "seeds": None}), str(run_dir / "config.yaml"))

    dataset = build_dataset(config.dataset, config.seed)
    export_csv(dataset, str(run_dir / "split.csv"))

    metrics_sink = MetricsSink(str(run_dir / "metrics.csv"))
    decision_sink = DecisionSink(str(run_dir / "decisions.csv")) if spec.dump_decisions else None
    ledger_sink = None
    if spec.dump_ledger and config.method is Method.MARGINMATCH:
        ledger_sink = LedgerSink(str(run_dir / "ledger.csv"), dataset.num_classes + 1)
    try:
        result = train(config, dataset, metrics_sink=metrics_sink, decision_sink=decision_sink,
                       ledger_sink=ledger_sink, abort_path=str(run_dir / "ABORT"))
    finally:
        for sink in (metrics_sink, decision_sink, ledger_sink):
            if sink is not None:
                sink.close()

    summary = create_summary(
        [m.to_dict() for m in result.metrics],
        config=echo["config"],
        split_sizes=result.split_sizes,
        tool_version=__version__,
        aborted=result.aborted,
    )
    save_json(summary, str(run_dir / "summary.json"))
    logger.info(f"Wrote {run_dir} ({result.wall_clock_sec:.1f}s)")
    return summary


def _execute_job(job: Tuple[Dict[str, Any], int, str, bool]) -> Dict[str, Any]:
    spec_data, seed, run_dir, overwrite = job
    return execute_run(RunSpec.model_validate(spec_data), seed, Path(run_dir), overwrite)


def _execute_all(jobs: List[Tuple[RunSpec, int, Path]], overwrite: bool, workers: int) -> List[Dict[str, Any]]:
    """Run jobs in order, or across ``workers`` processes (one directory per process)"""
    for _, _, run_dir in jobs:
        if run_dir.exists() and any(run_dir.iterdir()) and not overwrite:
            raise ConfigurationError(f"output directory {run_dir} exists and is not empty (pass --overwrite)",
                                     key="output_dir")
    payload = [(spec.model_dump(mode="json"), seed, str(run_dir), overwrite) for spec, seed, run_dir in jobs]
    if workers <= 1 or len(payload) <= 1:
        return [_execute_job(job) for job in payload]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_execute_job, payload))


def cmd_run(config_path: str, overwrite: bool = False, workers: int = 1) -> List[Path]:
    """Train every replicate seed of a run spec; returns the run directories"""
    spec = load_run_spec(config_path)
    root = output_root(spec)
    jobs = [(spec, seed, root / run_dir_name(spec.train_config(seed))) for seed in spec.replicate_seeds()]
    _execute_all(jobs, overwrite, workers)
    return [run_dir for _, _, run_dir in jobs]


def parse_values(text: str) -> List[Any]:
    """Comma-separated scalars, each parsed as a YAML scalar"""
    values = [yaml.safe_load(tok.strip()) for tok in text.split(",") if tok.strip()]
    if not values:
        raise ConfigurationError("no values given", key="values")
    return values


def _sweep_spec(spec: RunSpec, param: str, value: Any) -> RunSpec:
    swept = with_override(spec, SWEEPABLE_KEYS[param], value)
    if param == "delta" and float(value) == 1.0:
        # the delta = 1 column is the plain arithmetic mean
        swept = with_override(swept, "combine", Combine.AVG.value)
    return swept


def cmd_sweep(config_path: str, param: str, values: Sequence[Any],
              overwrite: bool = False, workers: int = 1) -> Path:
    """
    One run per (value, seed) plus aggregate.csv.

    Returns:
        Path of aggregate.csv
    """
    if param not in SWEEPABLE_KEYS:
        raise ConfigurationError(f"'{param}' is not sweepable (choose from {sorted(SWEEPABLE_KEYS)})", key=param)
    spec = load_run_spec(config_path)
    root = output_root(spec) / f"sweep_{param}_{config_hash(spec.train_config())}"

    jobs, labels = [], []
    for value in values:
        swept = _sweep_spec(spec, param, value)
        for seed in swept.replicate_seeds():
            run_dir = root / f"{param}={value}" / run_dir_name(swept.train_config(seed))
            jobs.append((swept, seed, run_dir))
            labels.append((value, seed, swept.method.value))
    summaries = _execute_all(jobs, overwrite, workers)

    aggregate = root / "aggregate.csv"
    with CsvSink(str(aggregate), AGGREGATE_COLUMNS) as sink:
        for (value, seed, method), (_, _, run_dir), summary in zip(labels, jobs, summaries):
            sink.append({
                "param": param,
                "value": value,
                "seed": seed,
                "method": method,
                "final_test_error": summary["final"]["test_error"],
                "mask_rate_tail": summary["tail"]["mask_rate"],
                "impurity_tail": summary["tail"]["impurity"],
                "run_dir": run_dir.relative_to(root).as_posix(),
            })
    return aggregate


def cmd_compare(config_path: str, methods: Sequence[str],
                overwrite: bool = False, workers: int = 1) -> Path:
    """
    Run several methods on the identical split and seeds; returns comparison.csv.
    """
    if len(methods) < 2:
        raise ConfigurationError("compare needs at least two methods", key="methods")
    spec = load_run_spec(config_path)
    parsed = []
    for name in methods:
        try:
            parsed.append(Method(name))
        except ValueError:
            raise ConfigurationError(f"unknown method '{name}'", key="methods") from None

    root = output_root(spec) / f"compare_{config_hash(spec.train_config())}"
    jobs = []
    for method in parsed:
        method_spec = with_override(spec, "method", method.value)
        for seed in method_spec.replicate_seeds():
            jobs.append((method_spec, seed, root / method.value / run_dir_name(method_spec.train_config(seed))))
    _execute_all(jobs, overwrite, workers)

    comparison = root / "comparison.csv"
    with CsvSink(str(comparison), COMPARISON_COLUMNS) as sink:
        for method_spec, seed, run_dir in jobs:
            for row in read_metrics_csv(str(run_dir / "metrics.csv")):
                sink.append({
                    "method": row.method,
                    "seed": seed,
                    "epoch": row.epoch,
                    "mask_rate": row.mask_rate,
                    "impurity": row.impurity,
                    "test_error": row.test_error,
                    "gamma": row.gamma,
                })
    return comparison


def _mean_curve(rows: List[Dict[str, str]], column: str) -> List[Tuple[float, float]]:
    by_epoch: Dict[float, List[float]] = defaultdict(list)
    for row in rows:
        if row.get(column, "") != "":
            by_epoch[float(row["epoch"])].append(float(row[column]))
    return [(epoch, sum(v) / len(v)) for epoch, v in sorted(by_epoch.items())]


def cmd_plot(input_csv: str, kind: str, out_path: str, example_id: Optional[int] = None) -> Path:
    """Render an SVG chart from a metrics, comparison or ledger CSV"""
    if kind not in PLOT_KINDS:
        raise ConfigurationError(f"unknown plot kind '{kind}' (choose from {sorted(PLOT_KINDS)})", key="kind")
    if not Path(input_csv).exists():
        raise ConfigurationError(f"input file not found: {input_csv}", key="input")
    header = read_csv_header(input_csv)
    missing = [col for col in PLOT_KINDS[kind] if col not in header]
    if missing:
        raise ConfigurationError(f"{input_csv} is missing columns for '{kind}': {', '.join(missing)}", key="input")
    rows = read_csv_rows(input_csv)

    series: List[Series] = []
    if kind == "apm_trace":
        if example_id is None:
            raise ConfigurationError("apm_trace needs --example-id", key="example_id")
        mine = [r for r in rows if int(r["id"]) == example_id]
        if not mine:
            raise ConfigurationError(f"example {example_id} was never tracked in {input_csv}", key="example_id")
        for col in [c for c in header if c.startswith("apm_")]:
            series.append(Series(f"class {col[4:]}", [(float(r["epoch"]), float(r[col])) for r in mine if r[col] != ""]))
        series.append(Series("gamma", [(float(r["epoch"]), float(r["gamma"])) for r in mine if r["gamma"] != ""],
                             dashed=True))
        title, y_label = f"Accumulated score of example {example_id}", "score"
    else:
        groups: Dict[str, List[Dict[str, str]]] = defaultdict(list)
        for row in rows:
            groups[row.get("method") or "run"].append(row)
        if kind == "error_curve":
            for name in sorted(groups):
                series.append(Series(name, _mean_curve(groups[name], "test_error")))
            title, y_label = "Test error", "error rate"
        else:
            for name in sorted(groups):
                series.append(Series(f"{name} mask rate", _mean_curve(groups[name], "mask_rate")))
                series.append(Series(f"{name} impurity", _mean_curve(groups[name], "impurity"), dashed=True))
            title, y_label = "Mask rate and impurity", "fraction"

    write_line_chart_svg(out_path, title, "epoch", y_label, series)
    return Path(out_path)


def _csv_list(text: str) -> List[str]:
    return [tok.strip() for tok in text.split(",") if tok.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="MarginLab semi-supervised experiment harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="Train a run spec (every replicate seed)")
    p_run.add_argument("--config", type=str, required=True, help="Path to run spec YAML")
    p_run.add_argument("--overwrite", action="store_true", help="Replace non-empty run directories")
    p_run.add_argument("--jobs", type=int, default=1, help="Parallel processes for replicate seeds")

    p_sweep = sub.add_parser("sweep", help="Sweep one parameter over a list of values")
    p_sweep.add_argument("--config", type=str, required=True, help="Path to run spec YAML")
    p_sweep.add_argument("--param", type=str, required=True, help=f"One of: {', '.join(sorted(SWEEPABLE_KEYS))}")
    p_sweep.add_argument("--values", type=str, required=True, help="Comma-separated values")
    p_sweep.add_argument("--overwrite", action="store_true", help="Replace non-empty run directories")
    p_sweep.add_argument("--jobs", type=int, default=1, help="Parallel processes")

    p_cmp = sub.add_parser("compare", help="Run several methods on one shared split")
    p_cmp.add_argument("--config", type=str, required=True, help="Path to run spec YAML")
    p_cmp.add_argument("--methods", type=str, required=True, help="Comma-separated methods")
    p_cmp.add_argument("--overwrite", action="store_true", help="Replace non-empty run directories")
    p_cmp.add_argument("--jobs", type=int, default=1, help="Parallel processes")

    p_plot = sub.add_parser("plot", help="Render an SVG chart from a CSV")
    p_plot.add_argument("--input", type=str, required=True, help="metrics.csv, comparison.csv or ledger.csv")
    p_plot.add_argument("--kind", type=str, required=True, choices=sorted(PLOT_KINDS))
    p_plot.add_argument("--out", type=str, required=True, help="Output SVG path")
    p_plot.add_argument("--example-id", type=int, default=None, help="Example id for apm_trace")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')
    args = build_parser().parse_args(argv)

    try:
        if args.command == "run":
            outputs = cmd_run(args.config, args.overwrite, args.jobs)
        elif args.command == "sweep":
            outputs = [cmd_sweep(args.config, args.param, parse_values(args.values), args.overwrite, args.jobs)]
        elif args.command == "compare":
            outputs = [cmd_compare(args.config, _csv_list(args.methods), args.overwrite, args.jobs)]
        else:
            outputs = [cmd_plot(args.input, args.kind, args.out, args.example_id)]
    except ConfigurationError as exc:
        logger.error(str(exc))
        return 2
    except ValidationError as exc:
        logger.error(f"invalid configuration: {exc}")
        return 2
    except (MarginLabError, OSError) as exc:
        logger.error(f"run failed: {exc}")
        return 1

    print("\n" + "=" * 50)
    print(f"{args.command.upper()} COMPLETE")
    print("=" * 50)
    for path in outputs:
        print(f"  {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
