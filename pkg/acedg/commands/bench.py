"""``acedg bench``: leave-one-domain-out comparison of ERM and Contrastive-ACE."""

import argparse
from pathlib import Path

from acedg.commands.common import add_config_options, load_config
from acedg.services.bench_service import METHODS, bench_leave_one_out
from acedg.services.report_service import render_table_markdown
from acedg.services.training_service import build_dataset


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("bench", help="Run the leave-one-out benchmark")
    add_config_options(parser)
    parser.add_argument("--out", type=Path, default=Path("results"))
    parser.add_argument("--threads", type=int, help="Worker threads (default: ACEDG_NUM_THREADS)")
    parser.set_defaults(handler=handle)


def handle(args: argparse.Namespace) -> int:
    config = load_config(args)
    report = bench_leave_one_out(config, build_dataset(config), args.out, num_threads=args.threads)
    print(render_table_markdown(report.table, METHODS), end="")
    return 0
