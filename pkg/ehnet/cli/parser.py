"""Argument parser and subcommand registration"""

import argparse
import sys
from typing import NoReturn, Optional, Sequence

from ehnet import __version__

USAGE_EXIT_CODE = 64


class CliParser(argparse.ArgumentParser):
    """ArgumentParser that exits with 64 on usage errors"""

    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        self.exit(USAGE_EXIT_CODE, f"{self.prog}: error: {message}\n")


def common_options() -> argparse.ArgumentParser:
    """Flags shared by every subcommand"""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", type=str, default=None,
                        help="experiment config file (falls back to EHNET_CONFIG)")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key, e.g. --set train.epochs=50 (repeatable)")
    common.add_argument("--seed", type=int, default=None, help="seed for every random draw")
    common.add_argument("--workers", type=int, default=None,
                        help="parallel workers (synthesis/evaluation default: all cores; training: 1)")
    common.add_argument("-v", "--verbose", action="count", default=0, help="more logging (-v info, -vv debug)")
    return common


def build_parser() -> CliParser:
    from ehnet.cli.commands import dump, enhance, evaluate, gradcheck, synthesize, train

    parser = CliParser(
        prog="ehnet",
        description="Speech enhancement with a convolutional-recurrent network: "
                    "corpus synthesis, training, enhancement and evaluation",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    common = common_options()

    # registration order is the order shown by --help
    for command in (synthesize, train, enhance, evaluate, gradcheck, dump):
        command.register(subparsers, [common])
    return parser


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    return build_parser().parse_args(argv)
