"""Exception hierarchy shared by every stage of the pipeline."""

from __future__ import annotations


class CabinPdsError(Exception):
    """Base class for all errors raised by cabinpds."""


class ParseError(CabinPdsError, ValueError):
    """Malformed seat-map text."""

    def __init__(self, message: str, row: int | None = None, column: int | str | None = None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column}")
        prefix = ", ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)
        self.row = row
        self.column = column


class ValidationError(CabinPdsError, ValueError):
    """A structurally valid object violates a domain invariant."""


class SeatLookupError(CabinPdsError, KeyError):
    """Requested seat does not exist in the layout."""

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""


class DomainError(CabinPdsError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class CoverageError(DomainError):
    """A seat-bearing row is not covered by any pitch section."""


class TransformError(DomainError):
    """A variable cannot be transformed (e.g. log of a nonpositive value)."""

    def __init__(self, variable: str, message: str):
        super().__init__(f"{variable}: {message}")
        self.variable = variable


class CodingError(CabinPdsError, ValueError):
    """A categorical value is not among the declared bands."""


class BuildError(CabinPdsError, ValueError):
    """The design matrix cannot be assembled from the given records."""

    def __init__(self, message: str, offending: dict | None = None):
        super().__init__(message)
        self.offending = offending or {}


class StandardizationError(CabinPdsError, ValueError):
    """A penalized column has zero variance."""

    def __init__(self, column: str | int):
        super().__init__(f"penalized column {column!r} has zero variance")
        self.column = column


class DataError(CabinPdsError, ValueError):
    """Non-finite values in numerical input."""


class RankDeficiencyError(CabinPdsError, ValueError):
    """Least-squares predictors are collinear after cleanup."""

    def __init__(self, columns: list[str]):
        super().__init__("collinear columns: " + ", ".join(map(str, columns)))
        self.columns = list(columns)


class InferenceError(CabinPdsError, ValueError):
    """Covariance or test statistics cannot be computed."""


class FitError(DomainError):
    """Fit statistics are undefined for the given inputs."""


class ConfigError(CabinPdsError, ValueError):
    """Infeasible or inconsistent configuration."""


class StageError(CabinPdsError):
    """Wraps an error raised inside a named pipeline stage."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause
