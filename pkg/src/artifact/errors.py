"""Exception hierarchy shared by every module of the package."""

from __future__ import annotations


class ArtifactError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(ArtifactError, ValueError):
    """An argument does not belong to the model (unknown state, action, ...)."""


class InfeasibleError(ArtifactError, ValueError):
    """An uncertainty set (possibly after constraining) has no member."""


class InvalidChoiceError(ArtifactError, ValueError):
    """A variable assignment disagrees with the fixed partial assignment."""


class ImpossibleObservationError(ArtifactError, ValueError):
    """A belief update was asked for an observation of probability zero."""


class ContractError(ArtifactError, ValueError):
    """A policy or argument violates an operation's precondition."""


class CapacityError(ArtifactError, RuntimeError):
    """An enumeration would exceed the configured capacity."""

    def __init__(self, message: str, count: int | None = None):
        super().__init__(message)
        self.count = count


class ParseError(ArtifactError, ValueError):
    """Syntax or semantic error in a model or policy document."""

    def __init__(self, reason: str, line: int = 0, column: int = 0):
        self.reason = reason
        self.line = line
        self.column = column
        super().__init__(f"line {line}, column {column}: {reason}")
