"""Exception types shared across the package."""


class CookielifeError(Exception):
    """Base class for every error raised by this package."""


class SchemaError(CookielifeError):
    """An input file does not match its expected schema."""


class RowError(CookielifeError):
    """A single input row could not be parsed."""

    def __init__(self, line_no, message):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class DataError(CookielifeError):
    """Input data violates a precondition (empty sample, all censored, ...)."""


class ConfigError(CookielifeError):
    """Invalid configuration value or combination."""


class ConvergenceError(CookielifeError):
    """An iterative fit did not converge; carries the optimizer result."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace
