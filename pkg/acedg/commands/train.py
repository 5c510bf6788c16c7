"""``acedg train``: one leave-one-out training run."""

import argparse
import logging
from pathlib import Path

from acedg.commands.common import add_config_options, load_config, print_json, save_normalization
from acedg.models.checkpoint import save_bundle
from acedg.services.training_service import build_dataset, prepare_split, train

logger = logging.getLogger(__name__)


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("train", help="Train on the source domains of one split")
    add_config_options(parser)
    parser.add_argument("--out", type=Path, default=Path("runs/train"), help="Directory for metrics.csv")
    parser.add_argument("--checkpoint", type=Path, help="Checkpoint path (default: <out>/checkpoint.json)")
    parser.set_defaults(handler=handle)


def handle(args: argparse.Namespace) -> int:
    """
    Train, write metrics.csv and the selected checkpoint.

    The normalization fitted on the source data, if any, is written next to
    the checkpoint so ``eval`` and ``attribute`` reuse it.
    """
    config = load_config(args)
    prepared = prepare_split(config, build_dataset(config))
    checkpoint = args.checkpoint or args.out / "checkpoint.json"

    bundle, metrics = train(config, prepared.split, metrics_path=args.out / "metrics.csv")
    save_bundle(bundle, checkpoint)
    if prepared.transform is not None:
        save_normalization(prepared.transform, checkpoint)
    logger.info("Saved checkpoint from epoch %s to %s", metrics.best_epoch, checkpoint)

    print_json({
        "checkpoint": str(checkpoint),
        "best_epoch": metrics.best_epoch,
        "val_acc": metrics.best_val_acc,
        "test_acc": metrics.selected_test_acc,
        "ace_ratio": metrics.selected_ace_ratio,
    })
    return 0
