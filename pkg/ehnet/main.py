"""EHNet command-line entry point"""

import sys
from typing import Optional, Sequence

from rich.markup import escape

from ehnet.cli.deps import CommandContext
from ehnet.cli.parser import build_parser
from ehnet.core.exceptions import EHNetError, exit_code_for
from ehnet.core.logging import get_logger


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Parse, run one subcommand, map errors to exit codes (0 ok, 1 check failed, 2 input, 3 numeric)"""
    args = build_parser().parse_args(argv)
    ctx = CommandContext.from_args(args)
    ctx.setup_logging()
    logger = get_logger(__name__)

    try:
        ctx.resolve_config()
        return int(args.handler(ctx, args))
    except EHNetError as e:
        logger.error(e.message, command=ctx.command, **{k: str(v) for k, v in e.context.items()})
        ctx.console.print(f"[red]error:[/red] {escape(e.message)}", highlight=False)
        for problem in e.context.get("problems", []):
            ctx.console.print(f"  {problem}", markup=False, highlight=False)
        return exit_code_for(e)
    except KeyboardInterrupt:
        logger.warning("interrupted", command=ctx.command)
        return 130


if __name__ == "__main__":
    sys.exit(main())
