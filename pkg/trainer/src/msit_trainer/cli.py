"""Command-line front end for training and prediction over MSIT stacks."""

from __future__ import annotations

import argparse
import logging
import sys

from .containers import read_manifest
from .models import spec_for
from .train import predict, train

log = logging.getLogger("msit_trainer")


def cmd_train(args: argparse.Namespace) -> int:
    spec = spec_for(
        args.arch,
        in_channels=args.channels,
        pretrained=args.pretrained,
        n_classes=args.classes,
    )
    if args.epochs is not None:
        spec.epochs = args.epochs
    if args.batch_size is not None:
        spec.batch_size = args.batch_size
    if args.lr is not None:
        spec.learning_rate = args.lr
    train_entries = read_manifest(args.manifest)
    holdout_entries = read_manifest(args.holdout_manifest) if args.holdout_manifest else None
    result = train(
        spec, train_entries, holdout_entries, args.stacks, args.out,
        seed=args.seed, early_stop_train_acc=args.stop_at_accuracy,
    )
    final = result.history[-1]
    log.info("finished at epoch %d: train accuracy %.3f", final.epoch, final.train_accuracy)
    print(result.checkpoint_path)
    return 0


def cmd_predict(args: argparse.Namespace) -> int:
    entries = read_manifest(args.manifest)
    predict(args.checkpoint, entries, args.stacks, args.out)
    log.info("wrote predictions for %d entries to %s", len(entries), args.out)
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="msit-trainer",
        description="Fine-tune convolutional classifiers on MSIT channel stacks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fine-tune a model on a manifest's stacks")
    p.add_argument("--manifest", required=True, help="training manifest JSONL")
    p.add_argument("--holdout-manifest", help="optional holdout manifest JSONL")
    p.add_argument("--stacks", required=True, help="directory of .msit stacks")
    p.add_argument("--arch", choices=("vgg16", "resnet50"), default="resnet50")
    p.add_argument("--channels", type=int, default=3, help="stack channel count")
    p.add_argument("--classes", type=int, default=9)
    p.add_argument("--epochs", type=int, help="override the architecture default")
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pretrained", action="store_true",
                   help="start from downloaded backbone weights")
    p.add_argument("--stop-at-accuracy", type=float,
                   help="end early once train accuracy reaches this")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="emit a prediction CSV for a manifest")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--stacks", required=True)
    p.add_argument("--out", required=True, help="prediction CSV path")
    p.set_defaults(func=cmd_predict)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    args = _build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
