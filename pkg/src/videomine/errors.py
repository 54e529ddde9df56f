"""Exception hierarchy shared by every module of the package."""
from __future__ import annotations


class VideomineError(Exception):
    """Base class for all domain errors raised by this package."""


class DuplicateKeyError(VideomineError):
    """Two records share a key that must be unique."""


class ScoreOutOfRangeError(VideomineError):
    """A detection score lies outside [0, 1] or the score map is empty."""


class MalformedBBoxError(VideomineError):
    """A bounding box violates 0 <= x1 < x2 <= 1 / 0 <= y1 < y2 <= 1."""


class UnbalancedLifecycleError(VideomineError):
    """A start event has no matching complete event (or vice versa)."""


class ParseError(VideomineError):
    """An input file could not be parsed; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class SchemaError(VideomineError):
    """An XES document is missing a mandatory attribute."""


class SinkUnavailableError(VideomineError):
    """An event notification sink cannot be written to."""


class OverlappingTruthError(VideomineError):
    """Reference instances of one resource overlap in time."""


class AmbiguousMatchError(VideomineError):
    """A detected instance is contained in more than one reference instance."""


class EmptyMatrixError(VideomineError):
    """Metrics requested for a confusion matrix with zero records."""


class EmptyLogError(VideomineError):
    """An operation that needs at least one trace received an empty log."""


class NotEnabledError(VideomineError):
    """A Petri-net transition was fired without being enabled."""


class FinalUnreachableError(VideomineError):
    """No sequence of moves reaches the final marking."""


class StateBudgetExceededError(VideomineError):
    """The alignment search exceeded its explored-state limit."""

    def __init__(self, limit: int):
        super().__init__(f"alignment search exceeded the state budget of {limit}")
        self.limit = limit


class ConfigError(VideomineError):
    """A configuration file or CLI flag combination is invalid."""
