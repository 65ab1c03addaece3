"""Command line: ``qgat validate-data | train | reproduce``.

Exit codes: 0 success, 1 user error (bad arguments, config or data),
2 runtime error (e.g. training diverged).
"""

from __future__ import annotations

import argparse
import json
import sys

from . import experiments
from .graph import DatasetError, load_dataset, summarize
from .models import ModelError
from .train import TrainingError

EXIT_OK, EXIT_USER, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USER, f"{self.prog}: error: {message}\n")


def cmd_validate_data(args) -> int:
    graphs = load_dataset(args.dataset, args.target)
    info = summarize(graphs)
    print(f"graphs: {info['count']}")
    print(f"max atoms: {info['max_atoms']}")
    print("size histogram: " + ", ".join(f"{k}:{v}" for k, v in info["size_histogram"].items()))
    for name, lo, hi in zip(("atomic_number", "chirality", "degree", "formal_charge",
                             "radical_electrons", "hybridization", "scaled_mass"),
                            info["feature_min"], info["feature_max"]):
        print(f"  {name:<18s} [{lo:g}, {hi:g}]")
    print(f"target range: [{info['target_min']:g}, {info['target_max']:g}]")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = experiments.ExperimentConfig.load(args.config)
    if args.out:
        cfg.output_dir = args.out
    if args.dataset:
        cfg.dataset = args.dataset
    model, report, metrics, split = experiments.run_experiment(cfg)
    experiments.write_run(cfg.output_dir, model, report, metrics)
    print(f"{cfg.kind} {cfg.aggregation} <= {cfg.max_atoms} atoms, {len(split.graphs)} molecules, "
          f"{report.num_params} params: loss {metrics['loss']:.6f}  r2 {metrics['r2']:.4f}")
    print(f"wrote {cfg.output_dir}/report.csv, summary.json, checkpoint.json")
    return EXIT_OK


def cmd_reproduce(args) -> int:
    buckets = tuple(int(b) for b in args.buckets.split(","))
    kinds = tuple(args.models.split(","))
    bad = [k for k in kinds if k not in experiments.KINDS]
    if bad:
        raise experiments.ConfigError(f"unknown model kinds {bad}")
    path = experiments.reproduce(args.out, args.dataset, buckets, kinds, args.samples, args.epochs,
                                 args.seed, log=print)
    print(f"wrote {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qgat", description="Quantum graph attention networks on molecular graphs.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("validate-data", help="parse a JSONL dataset and print a summary")
    p.add_argument("--dataset", required=True)
    p.add_argument("--target", default=None, help="read targets[KEY] instead of 'target'")
    p.set_defaults(func=cmd_validate_data)

    p = sub.add_parser("train", help="train one model from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help="override output_dir")
    p.add_argument("--dataset", default=None, help="override dataset (default: bundled fixture)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser(
        "reproduce",
        help="single vs multi grid over model kinds and size buckets",
        description="Desk-scale defaults: 10 molecules per bucket, 150 epochs. "
                    "Use --samples 30 or 40 for larger runs. Set QGAT_THREADS to run cells in parallel.",
    )
    p.add_argument("--dataset", default=None, help="JSONL dataset (default: bundled fixture)")
    p.add_argument("--out", required=True)
    p.add_argument("--samples", type=int, default=10)
    p.add_argument("--epochs", type=int, default=150)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--buckets", default=",".join(str(b) for b in experiments.BUCKETS))
    p.add_argument("--models", default=",".join(experiments.GRID_ORDER))
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (DatasetError, experiments.ConfigError, ModelError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except (TrainingError, ArithmeticError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
