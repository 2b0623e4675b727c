"""Exception types shared across the package."""

from __future__ import annotations


class KgqaError(Exception):
    """Base class for all package errors."""


class LoadError(KgqaError):
    """A fixture file line could not be parsed."""

    def __init__(self, path: str, line_no: int, reason: str):
        super().__init__(f"{path}:{line_no}: {reason}")
        self.path = path
        self.line_no = line_no
        self.reason = reason


class UnknownEntityError(KgqaError):
    """An entity id is not present in the graph."""


class SparqlSyntaxError(KgqaError):
    """Query text does not conform to the supported grammar."""

    def __init__(self, message: str, position: int, expected: set[str] | None = None):
        detail = f"at position {position}: {message}"
        if expected:
            detail += f" (expected one of: {', '.join(sorted(expected))})"
        super().__init__(detail)
        self.position = position
        self.expected = expected or set()


class UnsupportedFeatureError(KgqaError):
    """Query uses a SPARQL feature outside the supported subset."""

    def __init__(self, feature: str, position: int = 0):
        super().__init__(f"unsupported SPARQL feature: {feature}")
        self.feature = feature
        self.position = position


class InvalidDistributionError(KgqaError):
    """A probability vector failed validation."""


class BudgetExceededError(KgqaError):
    """Prompt exceeds the backend's context budget."""


class ReplayError(KgqaError):
    """Cassette has no entry for the requested call."""

    def __init__(self, key: str):
        super().__init__(f"no cassette entry for key {key}")
        self.key = key


class RemoteError(KgqaError):
    """Remote LLM endpoint returned a non-retryable failure."""

    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


class SessionStateError(KgqaError):
    """Operation not valid for the session's current status."""


class DatasetError(KgqaError):
    """An evaluation dataset item is unusable."""
