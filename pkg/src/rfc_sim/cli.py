"""Command-line entry points: run, validate-chain, gen-data, summarize.

Exit codes: 0 success, 1 config validation failure, 2 runtime abort,
3 chain validation failure.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
from typing import Dict, List, Optional, Sequence

from . import chain as chain_mod
from . import config as config_mod
from . import data as data_mod
from . import metrics
from .consensus import FederationResult, ProvenanceError, RoundAbortError

RECORD_COLUMNS = ("round", "winning_pool", "val_metric", "test_accuracy", "test_loss",
                  "backdoor_accuracy_target", "backdoor_accuracy_clean", "backdoor_loss")

SUMMARY_DIRECTIONS = {
    "test_accuracy": "maximize",
    "test_loss": "minimize",
    "backdoor_accuracy_target": "maximize",
    "backdoor_accuracy_clean": "maximize",
    "backdoor_loss": "minimize",
}


def _fmt(value) -> str:
    return repr(float(value)) if isinstance(value, float) else str(value)


def records_csv_text(result: FederationResult) -> str:
    n_pools = len(result.records[0].pool_metrics) if result.records else 0
    header = list(RECORD_COLUMNS) + [f"pool{p}_metric" for p in range(n_pools)]
    lines = [",".join(header)]
    for rec in result.records:
        row = [rec.round, rec.winning_pool_id, rec.val_metric, rec.test_accuracy, rec.test_loss,
               rec.backdoor_accuracy_target, rec.backdoor_accuracy_clean, rec.backdoor_loss]
        row.extend(rec.pool_metrics)
        lines.append(",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def summary_rows(series_by_name: Dict[str, List[float]], val_direction: str) -> List[tuple]:
    directions = dict(SUMMARY_DIRECTIONS)
    directions["val_metric"] = val_direction
    rows = []
    for name in ("val_metric",) + tuple(SUMMARY_DIRECTIONS):
        series = series_by_name.get(name)
        if not series:
            continue
        stats = metrics.summarize(series, directions[name])
        rows.append((name, directions[name], stats.final, stats.best, stats.avg_last_10,
                     stats.nonfinite_in_window))
    return rows


def summary_csv_text(series_by_name: Dict[str, List[float]], val_direction: str) -> str:
    lines = ["metric,direction,final,best,avg_last_10,nonfinite_in_window"]
    for name, direction, final, best, avg, skipped in summary_rows(series_by_name, val_direction):
        lines.append(f"{name},{direction},{final!r},{best!r},{avg!r},{skipped}")
    return "\n".join(lines) + "\n"


def _result_series(result: FederationResult) -> Dict[str, List[float]]:
    return {
        "val_metric": [r.val_metric for r in result.records],
        "test_accuracy": [r.test_accuracy for r in result.records],
        "test_loss": [r.test_loss for r in result.records],
        "backdoor_accuracy_target": [r.backdoor_accuracy_target for r in result.records],
        "backdoor_accuracy_clean": [r.backdoor_accuracy_clean for r in result.records],
        "backdoor_loss": [r.backdoor_loss for r in result.records],
    }


def write_outputs(result: FederationResult, rc: config_mod.RunConfig, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.txt"), "w", newline="\n") as fh:
        fh.write(config_mod.render_config(rc))
    if rc.export_records:
        with open(os.path.join(out_dir, "records.csv"), "w", newline="\n") as fh:
            fh.write(records_csv_text(result))
    if rc.export_chain:
        with open(os.path.join(out_dir, "chain.jsonl"), "w", newline="\n") as fh:
            fh.write(chain_mod.export_lines(result.chain))
    if rc.export_summary:
        with open(os.path.join(out_dir, "summary.csv"), "w", newline="\n") as fh:
            fh.write(summary_csv_text(_result_series(result), rc.federation.metric.direction))


def _cmd_run(args) -> int:
    try:
        rc = config_mod.parse_config_file(args.config) if args.config else config_mod.desk_default()
        if args.preset:
            rc = config_mod.preset(args.preset, rc)
        if args.seed is not None:
            rc = config_mod.with_master_seed(rc, args.seed)
    except (config_mod.ConfigError, ValueError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    try:
        result = config_mod.execute_run(rc)
    except (RoundAbortError, ProvenanceError) as exc:
        print(f"run aborted: {exc}", file=sys.stderr)
        return 2
    write_outputs(result, rc, args.out)
    last = result.records[-1]
    print(f"completed {len(result.records)} rounds; final test accuracy {last.test_accuracy:.4f}, "
          f"chain tip {result.chain.blocks[-1].hash.hex()[:16]}…")
    print(f"outputs in {args.out}")
    return 0


def _cmd_validate_chain(args) -> int:
    try:
        with open(args.chain_file) as fh:
            loaded = chain_mod.load_lines(fh.read())
    except (OSError, ValueError) as exc:
        print(f"chain validation failed: {exc}", file=sys.stderr)
        return 3
    bad = chain_mod.validate(loaded)
    if bad is not None:
        print(f"chain validation failed: first invalid block {bad}", file=sys.stderr)
        return 3
    print(f"chain ok ({len(loaded.blocks)} blocks, difficulty {loaded.difficulty})")
    return 0


def _cmd_gen_data(args) -> int:
    examples = data_mod.gen_synthetic(args.classes, args.height, args.width,
                                      args.per_class, args.noise_sigma, args.seed)
    data_mod.save_csv(examples, args.out)
    print(f"wrote {len(examples)} examples to {args.out}")
    return 0


def _cmd_summarize(args) -> int:
    with open(args.records, newline="") as fh:
        reader = csv.DictReader(fh)
        series: Dict[str, List[float]] = {}
        for row in reader:
            for name in ("val_metric",) + tuple(SUMMARY_DIRECTIONS):
                if name in row:
                    series.setdefault(name, []).append(float(row[name]))
    rows = summary_rows(series, args.val_direction)
    print("metric,direction,final,best,avg_last_10,nonfinite_in_window")
    for name, direction, final, best, avg, skipped in rows:
        print(f"{name},{direction},{final!r},{best!r},{avg!r},{skipped}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rfc-sim",
                                     description="Pooled federated learning on a hash chain, desk scale.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a federation run and export its artifacts")
    p_run.add_argument("--config", help="run config file (defaults to the built-in desk preset)")
    p_run.add_argument("--preset", choices=config_mod.PRESET_NAMES,
                       help="scenario preset applied on top of the config")
    p_run.add_argument("--seed", type=int, help="override master_seed")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.set_defaults(func=_cmd_run)

    p_val = sub.add_parser("validate-chain", help="re-validate an exported chain")
    p_val.add_argument("chain_file")
    p_val.set_defaults(func=_cmd_validate_chain)

    p_gen = sub.add_parser("gen-data", help="write a synthetic dataset CSV")
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--classes", type=int, default=3)
    p_gen.add_argument("--height", type=int, default=8)
    p_gen.add_argument("--width", type=int, default=8)
    p_gen.add_argument("--per-class", type=int, default=100, dest="per_class")
    p_gen.add_argument("--noise-sigma", type=float, default=0.35, dest="noise_sigma")
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.set_defaults(func=_cmd_gen_data)

    p_sum = sub.add_parser("summarize", help="print final / best / avg-last-10 for a records.csv")
    p_sum.add_argument("records")
    p_sum.add_argument("--val-direction", choices=("maximize", "minimize"),
                       default="maximize", dest="val_direction")
    p_sum.set_defaults(func=_cmd_summarize)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
