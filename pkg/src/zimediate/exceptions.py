"""Exception hierarchy used across the package."""


class ZIMediationError(Exception):
    """Base class for all package errors."""


class DomainError(ZIMediationError, ValueError):
    """An argument lies outside the support of a density or mechanism."""


class NonFiniteError(ZIMediationError, ArithmeticError):
    """A location, mean or likelihood term overflowed to a non-finite value."""


class IngestionError(ZIMediationError, ValueError):
    """Malformed input data (CSV rows, columns, scenario files)."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        full = message if line is None else f"line {line}: {message}"
        if column is not None:
            full += f" (column {column!r})"
        super().__init__(full)


class EstimationError(ZIMediationError, RuntimeError):
    """The model cannot be estimated from the supplied data."""


class DegenerateLikelihoodError(EstimationError):
    """A likelihood contribution is identically -inf at the current parameters."""


class QuadratureError(ZIMediationError, ArithmeticError):
    """Adaptive quadrature failed to reach its tolerance."""

    def __init__(self, message, records=None):
        self.records = records
        super().__init__(message)


class SelectionError(EstimationError):
    """Every candidate family failed during model selection."""
