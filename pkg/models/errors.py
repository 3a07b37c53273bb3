from typing import Optional, Sequence


class WispError(Exception):
    def __init__(self, message):
        self.message = message
        super().__init__(self.message)


class ContractError(WispError, ValueError):
    def __init__(self, message, operation: Optional[str] = None):
        self.operation = operation
        super().__init__(message)


class InvalidDraftError(ContractError):
    def __init__(self, message, token: int):
        self.token = token
        super().__init__(message, operation="acceptance_prob")


class ConfigError(WispError):
    def __init__(self, message, field: str):
        self.field = field
        super().__init__(message)


class ArtifactIOError(WispError):
    def __init__(self, message, path):
        self.path = str(path)
        super().__init__(message)


class DataError(WispError):
    pass


class TrainingError(DataError):
    pass


class FitError(DataError):
    def __init__(self, message, columns: Sequence[str] = ()):
        self.columns = list(columns)
        super().__init__(message)


class SimulationError(WispError):
    def __init__(self, message, sim_time: Optional[float] = None):
        self.sim_time = sim_time
        super().__init__(message)
