"""Command-line entry point."""

import argparse
import json
import logging
import sys

from acedg import __version__
from acedg.commands import COMMANDS

logger = logging.getLogger(__name__)

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


class UsageError(ValueError):
    """Raised instead of exiting when the command line cannot be parsed."""
    pass


class CliParser(argparse.ArgumentParser):
    """ArgumentParser whose errors surface as exceptions."""

    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(message)


def build_parser() -> CliParser:
    parser = CliParser(prog="acedg", description="Contrastive-ACE domain generalization lab")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", choices=LOG_LEVELS, default="INFO")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        command.register(subparsers)
    return parser


def _emit_error(exc: BaseException) -> None:
    """One machine-readable line on stderr."""
    print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)


def run(argv: list[str] | None = None) -> int:
    """
    Parse ``argv`` and dispatch to the subcommand.

    Returns:
        0 on success, 2 for usage errors, 1 for any other failure
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        _emit_error(e)
        return 2
    except SystemExit as e:  # --help / --version
        return int(e.code or 0)

    logging.basicConfig(
        level=args.log_level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )

    try:
        return args.handler(args)
    except Exception as e:
        logger.exception(
            "Command failed",
            extra={
                "command": args.command,
                "argv": sys.argv[1:] if argv is None else argv,
            },
        )
        _emit_error(e)
        return 1


if __name__ == "__main__":
    sys.exit(run())
