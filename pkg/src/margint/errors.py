"""Exception types shared across the package."""


class MargintError(Exception):
    """Base class for package errors."""


class GraphError(MargintError, ValueError):
    """Invalid graph input or an infeasible graph operation."""


class PathLimitError(GraphError):
    """Raised when path enumeration exceeds the configured cap."""


class InvalidAdjustmentSetError(MargintError, ValueError):
    """The adjustment set is malformed or fails the backdoor criterion."""


class NumericalError(MargintError, ArithmeticError):
    """A kernel fit could not be computed at a query point."""


class ZeroWeightError(NumericalError):
    """Every kernel weight vanished at a query point."""

    def __init__(self, message, query=None):
        super().__init__(message)
        self.query = query


class SingularSystemError(NumericalError):
    """The local weighted least-squares system is singular."""

    def __init__(self, message, query=None):
        super().__init__(message)
        self.query = query


class DataError(MargintError, ValueError):
    """Malformed data file, missing column, or non-finite values."""
