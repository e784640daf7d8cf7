"""Exception types shared across the package."""


class NumericalOverflowError(ArithmeticError):
    """A log-domain quantity exponentiated past the float64 range."""


class OracleError(RuntimeError):
    """The exact transportation solver failed to produce a certified optimum."""


class IdxFormatError(ValueError):
    """An IDX image file is malformed (bad magic number or truncated payload)."""
