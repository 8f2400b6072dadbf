"""Exception types shared across the package."""


class FzMooError(Exception):
    """Base class for all errors raised by fzmoo."""


class ValidationError(FzMooError, ValueError):
    """Malformed input: bad parameter space, wrong arity, invalid config."""


class EmptyDesignError(ValidationError):
    pass


class DegenerateScaleError(ValidationError):
    """A column has zero range and cannot be min-max scaled."""


class DomainError(ValidationError):
    """A design point lies outside the parameter box."""


class DataFormatError(FzMooError):
    """A data file could not be parsed. Carries the offending line number when known."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}" if where else message)


class NumericError(FzMooError, ArithmeticError):
    """Training or evaluation produced non-finite values."""
