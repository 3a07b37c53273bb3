import argparse
import sys
from typing import List, Optional

from core.commands import COMMANDS
from models.errors import ArtifactIOError, ConfigError, DataError, FitError, SimulationError, TrainingError
from settings import settings
from utils import setup_logger
from utils import (config_exception_handler,
                   artifact_io_exception_handler,
                   fit_exception_handler,
                   training_exception_handler,
                   data_exception_handler,
                   simulation_exception_handler,
                   generic_exception_handler,
                   resolve_handler)

logger = setup_logger(name="wisp.cli")

EXCEPTION_HANDLERS = {
    ConfigError: config_exception_handler,
    ArtifactIOError: artifact_io_exception_handler,
    FitError: fit_exception_handler,
    TrainingError: training_exception_handler,
    DataError: data_exception_handler,
    SimulationError: simulation_exception_handler,
    Exception: generic_exception_handler,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wisp", description="Speculative serving simulator and control stack")
    parser.add_argument("--version", action="version", version=f"%(prog)s {settings.APP_VERSION}")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        command.register(subparsers)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse usage errors exit 2, like any other config error
        return int(e.code or 0)

    try:
        code = args.handler(args)
        logger.info("Command finished", extra={"command": args.command})
        return code
    except Exception as exc:
        return resolve_handler(exc, EXCEPTION_HANDLERS)(exc)


if __name__ == "__main__":
    sys.exit(main())
