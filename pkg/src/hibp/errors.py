class HibpError(Exception):
    """Base class for package errors."""


class ParameterError(HibpError, ValueError):
    """Parameter outside its admissible domain."""


class NumericError(HibpError, ArithmeticError):
    """Numerical routine failed to reach the requested accuracy."""

    def __init__(self, message, residual=None):
        super().__init__(message if residual is None else f"{message} (residual estimate {residual:.3g})")
        self.residual = residual
