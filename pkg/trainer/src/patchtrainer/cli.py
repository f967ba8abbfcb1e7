"""Trainer command line: gen-data, train, ablation."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .ablation import ABLATION_ROWS, format_table, run_ablation, write_tsv
from .dataset import (
    discover_dumps,
    generate_synthetic_dataset,
    load_samples,
    split_by_sequence,
    trim_uniform,
)
from .model import export_weights
from .train import TrainConfig, train


def _load_split(root: str, val_sequences: str, n_per_class: int | None):
    samples = load_samples(discover_dumps(root))
    if n_per_class:
        samples = trim_uniform(samples, n_per_class)
    val = {s.strip() for s in val_sequences.split(",") if s.strip()}
    return split_by_sequence(samples, val)


def cmd_gen_data(args) -> int:
    samples = generate_synthetic_dataset(args.out, seed=args.seed,
                                         n_per_class=args.n_per_class,
                                         n_folds=args.folds)
    counts = samples.class_counts()
    print(f"generated {len(samples)} samples under {args.out}; "
          f"per-class counts {counts.tolist()}")
    return 0


def cmd_train(args) -> int:
    train_set, val_set = _load_split(args.data, args.val_sequences,
                                     args.n_per_class)
    channels = tuple(args.channels.split(",")) if args.channels else ()
    cfg = TrainConfig(channels=channels, epochs=args.epochs, seed=args.seed)
    result = train(train_set, val_set, cfg)
    print(f"validation accuracy {result.val_accuracy:.3f} "
          f"after {result.epochs_run} epochs "
          f"({len(train_set)} train / {len(val_set)} val samples)")
    if args.out:
        export_weights(result.model, args.out, channels)
        print(f"wrote {args.out}")
    return 0


def cmd_ablation(args) -> int:
    train_set, val_set = _load_split(args.data, args.val_sequences,
                                     args.n_per_class)
    rows = ABLATION_ROWS
    if args.rows:
        wanted = [int(i) for i in args.rows.split(",")]
        rows = tuple(ABLATION_ROWS[i] for i in wanted)
    cfg = TrainConfig(epochs=args.epochs, seed=args.seed)
    result = run_ablation(train_set, val_set, rows, cfg)
    table = format_table(result)
    print(table)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "ablation.txt").write_text(table + "\n")
        write_tsv(result, out / "ablation.tsv")
        print(f"wrote {out / 'ablation.txt'} and {out / 'ablation.tsv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="patchtrainer",
        description="train the Lidar patch classifier on synthetic scenes")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="render scenes and dump patches")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-per-class", type=int, default=200)
    p.add_argument("--folds", type=int, default=8)
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("train", help="train one configuration and export")
    p.add_argument("--data", required=True, help="gen-data output root")
    p.add_argument("--channels", default="intensity,hnv,vnv",
                   help="comma list; empty string for mask-only")
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--val-sequences", default="07")
    p.add_argument("--n-per-class", type=int, default=None)
    p.add_argument("--out", help="LCNW weight file to write")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("ablation", help="run the 16-row channel ablation")
    p.add_argument("--data", required=True)
    p.add_argument("--epochs", type=int, default=12)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--val-sequences", default="07")
    p.add_argument("--n-per-class", type=int, default=None)
    p.add_argument("--rows", help="comma list of row indices (default all 16)")
    p.add_argument("--out", help="directory for ablation.txt / ablation.tsv")
    p.set_defaults(fn=cmd_ablation)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
