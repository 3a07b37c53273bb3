import json
import sys
from typing import Callable, Dict, Type

from models.errors import ArtifactIOError, ConfigError, DataError, FitError, SimulationError, TrainingError
from .logging import setup_logger


logger = setup_logger(name="wisp.exit.handler")

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_DATA = 4


def _emit(payload: dict):
    print(json.dumps(payload, sort_keys=True, default=str), file=sys.stderr)


def config_exception_handler(exc: ConfigError) -> int:
    logger.error(f"Config error: {exc.message} - Field: {exc.field}")
    _emit({"error": "config", "message": exc.message, "field": exc.field})
    return EXIT_CONFIG


def artifact_io_exception_handler(exc: ArtifactIOError) -> int:
    logger.error(f"Artifact I/O error: {exc.message} - Path: {exc.path}")
    _emit({"error": "io", "message": exc.message, "path": exc.path})
    return EXIT_IO


def fit_exception_handler(exc: FitError) -> int:
    logger.error(f"Fit error: {exc.message} - Columns: {exc.columns}")
    _emit({"error": "fit", "message": exc.message, "columns": exc.columns})
    return EXIT_DATA


def training_exception_handler(exc: TrainingError) -> int:
    logger.error(f"Training error: {exc.message}")
    _emit({"error": "training", "message": exc.message})
    return EXIT_DATA


def data_exception_handler(exc: DataError) -> int:
    logger.error(f"Data error: {exc.message}")
    _emit({"error": "data", "message": exc.message})
    return EXIT_DATA


def simulation_exception_handler(exc: SimulationError) -> int:
    logger.error(f"Simulation error: {exc.message} - Sim time: {exc.sim_time}")
    _emit({"error": "simulation", "message": exc.message, "sim_time": exc.sim_time})
    return EXIT_UNEXPECTED


def generic_exception_handler(exc: Exception) -> int:
    logger.exception("An unexpected error occurred")
    _emit({"error": "unexpected", "message": "An unexpected error occurred", "detail": str(exc)})
    return EXIT_UNEXPECTED


ExitHandler = Callable[[Exception], int]


def resolve_handler(exc: Exception, handlers: Dict[Type[BaseException], ExitHandler]) -> ExitHandler:
    """The handler registered for the closest class in the exception's MRO."""
    for cls in type(exc).__mro__:
        if cls in handlers:
            return handlers[cls]
    return generic_exception_handler
