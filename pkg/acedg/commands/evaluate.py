"""``acedg eval``: accuracy of a saved checkpoint on one part of the split."""

import argparse
from pathlib import Path

from acedg.commands.common import add_config_options, load_config, print_json, split_for_checkpoint
from acedg.models.checkpoint import load_bundle
from acedg.services.training_service import build_dataset, evaluate

SPLIT_PARTS = ("train", "validation", "test")


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("eval", help="Evaluate a checkpoint")
    add_config_options(parser)
    parser.add_argument("--checkpoint", type=Path, required=True)
    parser.add_argument("--split", choices=SPLIT_PARTS, default="test")
    parser.set_defaults(handler=handle)


def handle(args: argparse.Namespace) -> int:
    config = load_config(args)
    bundle = load_bundle(args.checkpoint)
    split = split_for_checkpoint(config, build_dataset(config), args.checkpoint)
    part = getattr(split, args.split)
    print_json({
        "target_domain": split.target_domain,
        "split": args.split,
        "samples": len(part),
        "accuracy": evaluate(bundle, part),
    })
    return 0
