"""Exception hierarchy shared by every module in the package."""


class BrailError(Exception):
    """Base class for all errors raised by this package."""


class RejectedInputError(BrailError, ValueError):
    """Input violates a documented precondition (domain, shape, config)."""


class ParseError(RejectedInputError):
    """A tabular input could not be parsed.

    ``row`` is the 1-based data row (header excluded) and ``column`` the
    header name, when known.
    """

    def __init__(self, message, row=None, column=None):
        self.row = row
        self.column = column
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class NumericError(BrailError, ArithmeticError):
    """A numerical routine diverged, overflowed, or failed to converge."""


class ConfigError(RejectedInputError):
    """An experiment or estimator configuration is invalid."""
