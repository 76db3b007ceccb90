import argparse
import logging
import sys
from typing import List, Optional

import structlog
from pydantic import ValidationError

from .commands import bench, fg, gen, gradcheck, sweep, train, unfold
from .config import Settings, get_settings
from .exceptions import CPCANetError

COMMANDS = (fg, unfold, gradcheck, gen, train, sweep, bench)

logger = structlog.get_logger()


def configure_logging(settings: Settings, quiet: bool = False) -> None:
    """Structured logs on stderr; stdout carries only command output."""
    level = logging.WARNING if quiet else getattr(logging, settings.log_level)
    logging.basicConfig(stream=sys.stderr, level=level, format="%(message)s", force=True)
    renderer = (
        structlog.dev.ConsoleRenderer()
        if settings.log_format == "console"
        else structlog.processors.JSONRenderer()
    )
    structlog.configure(
        processors=[
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.stdlib.PositionalArgumentsFormatter(),
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            structlog.processors.UnicodeDecoder(),
            renderer,
        ],
        context_class=dict,
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )


class CliParser(argparse.ArgumentParser):
    """Usage errors exit with status 1 instead of argparse's 2, which means non-convergence here."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = CliParser(add_help=False)
    common.add_argument("--config", help="Run config file (.toml or .json)")
    common.add_argument("--seed", type=int, help="Master seed")
    common.add_argument("--out", help="Output directory")
    common.add_argument("--quiet", action="store_true", help="Only log warnings and errors")

    parser = CliParser(prog="cpcanet", description="Common principal components: solvers, unfolding and training")
    subparsers = parser.add_subparsers(dest="command", required=True, parser_class=CliParser)
    for command in COMMANDS:
        command.register(subparsers, [common])
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        settings = get_settings()
    except ValidationError as e:
        print(f"cpcanet: invalid environment settings: {e}", file=sys.stderr)
        return 1
    configure_logging(settings, args.quiet)

    try:
        return args.func(args, settings)
    except CPCANetError as e:
        logger.error(
            "command.failed",
            command=args.command,
            error=e.detail,
            error_code=e.error_code,
            suggestions=e.suggestions,
        )
        return e.exit_code
    except OSError as e:
        logger.error("command.io_failed", command=args.command, error=str(e))
        return 1


if __name__ == "__main__":
    sys.exit(main())
