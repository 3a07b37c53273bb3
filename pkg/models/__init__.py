from .errors import (WispError,
                     ContractError,
                     InvalidDraftError,
                     ConfigError,
                     ArtifactIOError,
                     DataError,
                     TrainingError,
                     FitError,
                     SimulationError)


__all__ = [
    "WispError",
    "ContractError",
    "InvalidDraftError",
    "ConfigError",
    "ArtifactIOError",
    "DataError",
    "TrainingError",
    "FitError",
    "SimulationError"
]
