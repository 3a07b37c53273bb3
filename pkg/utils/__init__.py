from .logging import setup_logger
from .exit_handlers import (config_exception_handler,
                            artifact_io_exception_handler,
                            fit_exception_handler,
                            training_exception_handler,
                            data_exception_handler,
                            simulation_exception_handler,
                            generic_exception_handler,
                            resolve_handler
                            )


__all__ = [
    "setup_logger",
    "config_exception_handler",
    "artifact_io_exception_handler",
    "fit_exception_handler",
    "training_exception_handler",
    "data_exception_handler",
    "simulation_exception_handler",
    "generic_exception_handler",
    "resolve_handler"
]
