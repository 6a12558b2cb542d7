"""Exception hierarchy shared by every difflstm module."""


class DiffLSTMError(Exception):
    """Base class for all library errors."""


class ShapeError(DiffLSTMError, ValueError):
    """Operand dimensions do not agree."""


class ParameterError(DiffLSTMError, ValueError):
    """An argument is outside its valid domain."""


class NumericError(DiffLSTMError, ArithmeticError):
    """A computation produced NaN or Inf."""


class IntegrationError(NumericError):
    """The ODE right-hand side was non-finite at some step."""

    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step


class GenerationError(NumericError):
    """A generated trajectory diverged."""

    def __init__(self, message: str, index: int):
        super().__init__(message)
        self.index = index


class TrainingError(NumericError):
    """Training hit a non-finite loss or update."""

    def __init__(self, message: str, epoch: int, last_finite_loss: float | None):
        super().__init__(message)
        self.epoch = epoch
        self.last_finite_loss = last_finite_loss


class ConfigError(DiffLSTMError, ValueError):
    """Experiment or CLI configuration is invalid."""


class ModelFileError(DiffLSTMError):
    """A serialized model could not be read."""


class CorruptFileError(ModelFileError):
    pass


class VersionError(ModelFileError):
    pass


class UnknownMetricError(DiffLSTMError, KeyError):
    """Metric keys of a report and a reference table do not line up."""
