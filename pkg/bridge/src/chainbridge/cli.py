"""Command-line interface: train, serve, score-file.

Exit codes follow the chainlab convention: 0 on success, 1 for usage
and input errors, 2 for internal failures (with a traceback).
"""

from __future__ import annotations

import argparse
import sys
import traceback
from pathlib import Path

from chainbridge.checkpoint import load_checkpoint
from chainbridge.data import (
    LabeledChain,
    read_chain_rows,
    read_labeled_chains,
    write_records,
)
from chainbridge.serve import serve_http, serve_stdio
from chainbridge.train import TrainConfig, train

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_INTERNAL = 2


class _ArgumentParser(argparse.ArgumentParser):
    """argparse that exits with the input-error code instead of 2."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_INPUT)


def do_train(args: argparse.Namespace) -> int:
    config = TrainConfig(
        learning_rate=args.learning_rate,
        negative_weight=args.negative_weight,
        head_depth=args.head_depth,
        epochs=args.epochs,
        seed=args.seed,
        batch_size=args.batch_size,
        dim=args.dim,
        num_layers=args.num_layers,
        num_heads=args.num_heads,
        ff_dim=args.ff_dim,
        max_len=args.max_len,
        dropout=args.dropout,
    )
    train_examples = read_labeled_chains(args.data)
    dev_examples = read_labeled_chains(args.dev)
    if args.extra_negatives:
        extras = [
            LabeledChain(
                question_id=row.question_id or row.chain_id,
                f1=row.f1,
                f2=row.f2,
                hypothesis=row.hypothesis,
                label=0,
            )
            for row in read_chain_rows(args.extra_negatives)
        ]
        train_examples = list(train_examples) + extras
        print(f"added {len(extras)} extra negative chains")
    result = train(train_examples, dev_examples, config, args.out)
    for row in result.history:
        loss = "-" if row["train_loss"] is None else f"{row['train_loss']:.4f}"
        print(f"epoch {row['epoch']}: loss {loss} dev_p@1 {row['dev_p_at_1']:.4f}")
    print(
        f"saved epoch {result.best_epoch} (dev_p@1 {result.best_dev_p_at_1:.4f}) "
        f"to {result.checkpoint_dir}"
    )
    return EXIT_OK


def do_serve(args: argparse.Namespace) -> int:
    scorer = load_checkpoint(args.checkpoint)
    if args.http is not None:
        serve_http(scorer, args.http)
    else:
        serve_stdio(scorer)
    return EXIT_OK


def do_score_file(args: argparse.Namespace) -> int:
    scorer = load_checkpoint(args.checkpoint)
    rows = read_chain_rows(args.chains)
    scores = scorer.score_batch(
        [(row.f1, row.f2, row.hypothesis) for row in rows],
        batch_size=args.batch_size,
    )
    header = {
        "record_type": "header",
        "tool": "chainbridge",
        "command": "score-file",
        "checkpoint": str(args.checkpoint),
        "chains": str(args.chains),
    }
    scorer_name = f"chainbridge:{Path(args.checkpoint).name}"
    write_records(
        args.out,
        header,
        (
            {
                "record_type": "score",
                "chain_id": row.chain_id,
                "question_id": row.question_id,
                "score": score,
                "scorer_name": scorer_name,
            }
            for row, score in zip(rows, scores)
        ),
    )
    print(f"scored {len(rows)} chains -> {args.out}")
    return EXIT_OK


def build_parser() -> _ArgumentParser:
    parser = _ArgumentParser(
        prog="chainbridge",
        description="Neural reasoning-chain scorer for the chainlab wire protocol.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a classifier from labeled chains")
    p_train.add_argument("--data", required=True, help="labeled training chains (JSONL)")
    p_train.add_argument("--dev", required=True, help="labeled validation chains (JSONL)")
    p_train.add_argument("--out", required=True, help="checkpoint directory to create")
    p_train.add_argument(
        "--extra-negatives",
        default=None,
        help="optional chain file appended to training as negatives",
    )
    defaults = TrainConfig()
    p_train.add_argument("--learning-rate", type=float, default=defaults.learning_rate)
    p_train.add_argument("--negative-weight", type=float, default=defaults.negative_weight)
    p_train.add_argument("--head-depth", type=int, default=defaults.head_depth)
    p_train.add_argument("--epochs", type=int, default=defaults.epochs)
    p_train.add_argument("--seed", type=int, default=defaults.seed)
    p_train.add_argument("--batch-size", type=int, default=defaults.batch_size)
    p_train.add_argument("--dim", type=int, default=defaults.dim)
    p_train.add_argument("--num-layers", type=int, default=defaults.num_layers)
    p_train.add_argument("--num-heads", type=int, default=defaults.num_heads)
    p_train.add_argument("--ff-dim", type=int, default=defaults.ff_dim)
    p_train.add_argument("--max-len", type=int, default=defaults.max_len)
    p_train.add_argument("--dropout", type=float, default=defaults.dropout)
    p_train.set_defaults(func=do_train)

    p_serve = sub.add_parser("serve", help="serve a checkpoint over the wire protocol")
    p_serve.add_argument("--checkpoint", required=True, help="checkpoint directory")
    p_serve.add_argument(
        "--http",
        type=int,
        metavar="PORT",
        default=None,
        help="serve HTTP on 127.0.0.1:PORT instead of stdio",
    )
    p_serve.set_defaults(func=do_serve)

    p_score = sub.add_parser("score-file", help="score a chain file offline")
    p_score.add_argument("--checkpoint", required=True, help="checkpoint directory")
    p_score.add_argument("--chains", required=True, help="chain file to score (JSONL)")
    p_score.add_argument("--out", required=True, help="score records to write (JSONL)")
    p_score.add_argument("--batch-size", type=int, default=64)
    p_score.set_defaults(func=do_score_file)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception:
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
