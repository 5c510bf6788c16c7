"""Subcommand handlers registered by ``acedg.main``."""

from acedg.commands import attribute, bench, evaluate, gen_data, train

COMMANDS = (train, evaluate, attribute, bench, gen_data)

__all__ = ["COMMANDS"]
