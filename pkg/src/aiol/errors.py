"""Exception types shared across the package."""


class AiolError(Exception):
    """Base class for package errors."""


class InvalidArgument(AiolError, ValueError):
    """An argument violates an operation's precondition."""


class TrainingDiverged(AiolError, FloatingPointError):
    """A loss or update became non-finite or exceeded the divergence bound.

    ``trace`` holds the rows completed before divergence, when available.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class InsufficientData(AiolError, ValueError):
    """Too few observations to fit a model."""


class DegenerateDistribution(AiolError, ValueError):
    """The data cannot support a two-component split (e.g. all scores equal)."""


class IngestionError(AiolError, ValueError):
    """A data file is missing or malformed.

    ``lines`` lists the 1-based line numbers that failed to parse.
    """

    def __init__(self, message, lines=()):
        super().__init__(message)
        self.lines = list(lines)


class ConfigError(AiolError, ValueError):
    """Configuration is invalid, inconsistent, or refers to missing paths."""
