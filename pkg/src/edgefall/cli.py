"""Command-line entry point.

Subcommands: ingest, synth, train, distill, ablate, compare, select, bench,
infer. Global flags --config/--seed/--out/--quiet come before the
subcommand. Exit codes: 0 success, 2 config error, 3 data error,
4 numerical abort.

Heavy imports happen inside main() so EDGEFALL_THREADS can cap the BLAS
thread pools before numpy loads.
"""

from __future__ import annotations

import argparse
import os
import sys


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="edgefall",
        description="Fall-detection experiments: train, distill, ablate, and "
                    "select sensor/model configurations.",
    )
    parser.add_argument("--config", help="key-value config file")
    parser.add_argument("--seed", type=int, default=None, help="master RNG seed (default 42)")
    parser.add_argument("--out", default="out", help="output directory (default ./out)")
    parser.add_argument("--quiet", action="store_true", help="suppress progress output")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_dataset_flags(p, include_sensors=True):
        p.add_argument("--data", help="directory of trial CSVs")
        p.add_argument("--synth", action="store_true", help="use the synthetic generator")
        p.add_argument("--n-per-class", type=int, default=None, help="synthetic windows per class")
        p.add_argument("--noise-std", type=float, default=None, help="synthetic noise level")
        p.add_argument("--window", type=int, default=None, help="window length in samples")
        p.add_argument("--stride", type=int, default=None, help="window stride in samples")
        p.add_argument("--test-fraction", type=float, default=None, help="random-split test share")
        p.add_argument("--fall-codes", default=None, help="comma list of fall activity codes")
        p.add_argument("--no-normalize", action="store_true", help="skip per-channel z-scoring")
        if include_sensors:
            p.add_argument("--sensors", default=None, help="sensor subset, e.g. A, AB, ABG")

    def add_train_flags(p):
        p.add_argument("--epochs", type=int, default=None)
        p.add_argument("--batch-size", type=int, default=None)
        p.add_argument("--lr", type=float, default=None, help="learning rate")
        p.add_argument("--clip-norm", type=float, default=None, help="gradient clip norm")
        p.add_argument("--no-shuffle", action="store_true")
        p.add_argument("--lstm-units", type=int, default=None)
        p.add_argument("--hidden-units", type=int, default=None)

    def add_distill_flags(p):
        p.add_argument("--temperature", type=float, default=None, help="distillation temperature")
        p.add_argument("--alpha", type=float, default=None, help="hard-label loss weight")
        p.add_argument("--width-factor", type=float, default=None, help="student width factor")

    p = sub.add_parser("ingest", help="parse trial CSVs and report dataset statistics")
    add_dataset_flags(p)

    p = sub.add_parser("synth", help="generate and export a synthetic dataset")
    add_dataset_flags(p)

    p = sub.add_parser("train", help="train a classifier")
    add_dataset_flags(p)
    add_train_flags(p)

    p = sub.add_parser("distill", help="distill a trained teacher into a student")
    add_dataset_flags(p)
    add_train_flags(p)
    add_distill_flags(p)
    p.add_argument("--teacher", required=True, help="teacher model file")

    p = sub.add_parser("ablate", help="train one model per sensor subset")
    add_dataset_flags(p, include_sensors=False)
    add_train_flags(p)
    p.add_argument("--subsets", default=None, help="comma list of subsets (default all 7)")

    p = sub.add_parser("compare", help="big vs small vs KD accuracy per subset")
    add_dataset_flags(p, include_sensors=False)
    add_train_flags(p)
    add_distill_flags(p)
    p.add_argument("--subsets", default=None, help="comma list of subsets (default all 7)")

    p = sub.add_parser("select", help="pick the lowest-power config above an accuracy floor")
    add_dataset_flags(p, include_sensors=False)
    add_train_flags(p)
    add_distill_flags(p)
    p.add_argument("--subsets", default=None, help="comma list of subsets (default all 7)")
    p.add_argument("--floor", type=float, required=True, help="accuracy floor")
    p.add_argument("--candidates", default=None,
                   help="JSON file of prepared candidates (skips training)")

    p = sub.add_parser("bench", help="measure single-window inference latency")
    p.add_argument("--model", default=None, help="model file (default: fresh KD-student topology)")
    p.add_argument("--sensors", default=None, help="sensor subset for the default topology")
    p.add_argument("--lstm-units", type=int, default=None)
    p.add_argument("--hidden-units", type=int, default=None)
    p.add_argument("--window", type=int, default=None)
    p.add_argument("--trials", type=int, default=50)

    p = sub.add_parser("infer", help="classify one window from a CSV file")
    p.add_argument("--model", required=True, help="model file")
    p.add_argument("window_csv", help="CSV with one row of T values per channel")
    p.add_argument("--threshold", type=float, default=0.5)

    return parser


def main(argv=None) -> int:
    threads = os.environ.get("EDGEFALL_THREADS")
    if threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, threads)

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    from . import commands
    from .errors import ConfigError, DataError, NumericalAbort

    try:
        return commands.dispatch(args)
    except ConfigError as exc:
        print(f"edgefall: config error: {exc}", file=sys.stderr)
        return 2
    except (DataError, FileNotFoundError) as exc:
        print(f"edgefall: data error: {exc}", file=sys.stderr)
        return 3
    except NumericalAbort as exc:
        print(f"edgefall: numerical abort: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
