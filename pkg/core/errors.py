from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any


EXIT_OK = 0
EXIT_ENVELOPE_VIOLATION = 2
EXIT_CONFIGURATION = 3
EXIT_NUMERIC = 4


@dataclass
class CanonicalWeylError(Exception):
    message: str
    exit_code: int = EXIT_NUMERIC
    payload: dict[str, Any] | None = None

    def __str__(self) -> str:
        return self.message


@dataclass
class ConfigurationError(CanonicalWeylError):
    """Raised when inputs, fixtures or parameters are not admissible."""

    exit_code: int = EXIT_CONFIGURATION


@dataclass
class NumericalError(CanonicalWeylError):
    """Raised when a numerical routine cannot deliver the requested accuracy."""

    exit_code: int = EXIT_NUMERIC


class DomainError(ConfigurationError):
    pass


class ParameterOutOfRange(ConfigurationError):
    pass


class NotMonotone(ConfigurationError):
    pass


class NotSupported(ConfigurationError):
    pass


class IndivisibleStart(ConfigurationError):
    """Raised when h1 or h2 vanishes identically right after the left endpoint."""


class InvalidBracket(ConfigurationError):
    pass


class NoRankOneLimit(ConfigurationError):
    pass


class InsufficientSamples(ConfigurationError):
    pass


class PotentialTooLarge(ConfigurationError):
    pass


class NeedsMoreInformation(ConfigurationError):
    pass


@dataclass
class ParseError(ConfigurationError):
    line: int | None = None
    column: int | None = None

    def __str__(self) -> str:
        if self.line is None:
            return self.message
        return f"{self.message} (line {self.line}, column {self.column})"


@dataclass
class SchemaError(ConfigurationError):
    key: str = ""

    def __str__(self) -> str:
        return f"{self.key}: {self.message}" if self.key else self.message


class QuadratureError(NumericalError):
    pass


class BracketError(NumericalError):
    pass


class StepFailure(NumericalError):
    pass


class DegenerateDisc(NumericalError):
    pass


@dataclass
class SlowShrink(NumericalError):
    achieved_radius: float = field(default=float("inf"))

    def __str__(self) -> str:
        return f"{self.message} (achieved radius {self.achieved_radius:.3e})"


class InconclusiveNearEndpoint(NumericalError):
    pass


class IVPFailure(NumericalError):
    pass
