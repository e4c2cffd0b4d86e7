"""Exception types raised by the package."""


class CSCLassoError(Exception):
    """Base class for all package errors."""


class PreconditionError(CSCLassoError, ValueError):
    """An operation was called on input that violates its stated precondition."""


class DegenerateBaselineError(CSCLassoError):
    """A baseline group MSE is (numerically) zero, so ratios against it are undefined."""


class InvalidGammaError(CSCLassoError, ValueError):
    """Improvement fraction outside ``[0, 1)``."""


class InfeasibleError(CSCLassoError):
    """The quadratic constraint set appears to be empty."""


class BudgetExceededError(CSCLassoError):
    """An iterative search ran out of its doubling budget."""


class DataFormatError(CSCLassoError, ValueError):
    """Malformed dataset or group-spec input.

    ``row`` and ``column`` locate the offending cell when known (0-based data
    row, column name).
    """

    def __init__(self, message, row=None, column=None):
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column!r}")
        if loc:
            message = f"{message} ({', '.join(loc)})"
        super().__init__(message)
        self.row = row
        self.column = column


class ConstantColumnError(CSCLassoError, ValueError):
    """A column has (near) zero standard deviation and cannot be standardized."""
