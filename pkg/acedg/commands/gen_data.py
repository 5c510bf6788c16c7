"""``acedg gen-data``: materialize the configured dataset as .npz plus manifest."""

import argparse
from pathlib import Path

from acedg.commands.common import add_config_options, load_config, print_json
from acedg.services.data_service import dataset_manifest, save_dataset
from acedg.services.training_service import build_dataset


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("gen-data", help="Generate synthetic or rotated domains")
    add_config_options(parser)
    parser.add_argument("--out", type=Path, default=Path("data/domains.npz"))
    parser.set_defaults(handler=handle)


def handle(args: argparse.Namespace) -> int:
    config = load_config(args)
    dataset = build_dataset(config)
    path = save_dataset(dataset, args.out)
    manifest = dataset_manifest(dataset)
    print_json({"out": str(path), "samples": manifest["samples"], "domains": len(manifest["domains"])})
    return 0
