"""``acedg attribute``: per-sample ACE vectors of a checkpoint as CSV."""

import argparse
from pathlib import Path

import numpy as np

from acedg.commands.common import add_config_options, load_config, print_json, split_for_checkpoint
from acedg.commands.evaluate import SPLIT_PARTS
from acedg.models.checkpoint import load_bundle
from acedg.models.network import encode
from acedg.services.attribution_service import ace_matrix, compute_bounds
from acedg.services.report_service import write_ace_csv
from acedg.services.training_service import build_dataset
from acedg.utils.tensor import no_tape, tensor


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("attribute", help="Write ACE vectors for a dataset slice")
    add_config_options(parser)
    parser.add_argument("--checkpoint", type=Path, required=True)
    parser.add_argument("--split", choices=SPLIT_PARTS, default="test")
    parser.add_argument("--limit", type=int, help="Only the first N samples of the slice")
    parser.add_argument("--out", type=Path, default=Path("ace.csv"))
    parser.set_defaults(handler=handle)


def handle(args: argparse.Namespace) -> int:
    """
    Compute the ACE vector of every sample toward its own label.

    Intervention bounds come from the latents of the source training data,
    the support the checkpoint was trained on.
    """
    config = load_config(args)
    bundle = load_bundle(args.checkpoint)
    split = split_for_checkpoint(config, build_dataset(config), args.checkpoint)
    part = getattr(split, args.split)
    if args.limit is not None:
        part = part.subset(np.arange(min(args.limit, len(part))))

    with no_tape():
        bounds = compute_bounds(encode(bundle, tensor(split.train.features)), config.bounds_epsilon)
        z = encode(bundle, tensor(part.features))
        ace = ace_matrix(bundle.head, z, part.labels, bounds, config.estimator_config())
    write_ace_csv(part.sample_ids, part.labels, ace.values, args.out)
    print_json({"out": str(args.out), "samples": len(part), "latent_dim": bounds.latent_dim})
    return 0
