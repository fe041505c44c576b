"""Exception hierarchy.

Configuration problems and data problems are kept apart because the CLI maps
them to different exit codes (2 and 3).
"""

from __future__ import annotations


class QuickDetectError(Exception):
    """Base class for all package errors."""


class ConfigError(QuickDetectError, ValueError):
    """Invalid configuration or argument value."""


class DesignError(ConfigError):
    """Score design parameters that violate the score invariants."""


class DataError(QuickDetectError, ValueError):
    """Input data that cannot be processed."""


class ParseError(DataError):
    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class OrderingError(DataError):
    """Bin indices that are duplicated, decreasing or have gaps."""


class DomainError(DataError):
    """A value outside its admissible range (negative count, LR <= 0, ...)."""


class InsufficientDataError(DataError):
    pass


class DegenerateBaselineError(DataError):
    """Zero sample variance; standardized scores are undefined."""


class NotDetectedError(DataError):
    """No alarm was raised after the changepoint."""
