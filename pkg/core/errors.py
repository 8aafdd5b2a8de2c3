"""Exception hierarchy shared by every MRA module."""
from typing import Any, Dict


class MRAError(Exception):
    """Base error: a message plus the offending values."""

    def __init__(self, message: str, **context: Any):
        self.message = message
        self.context: Dict[str, Any] = context
        super().__init__(self.message)

    def __str__(self):
        if self.context:
            details = ", ".join(f"{k}={v!r}" for k, v in self.context.items())
            return f"{self.message} ({details})"
        return self.message


class InvalidSignalError(MRAError, ValueError):
    pass


class DimensionMismatchError(MRAError, ValueError):
    pass


class InvalidSampleError(MRAError, ValueError):
    pass


class PhaseSystemError(MRAError, ValueError):
    pass


class QuadratureError(MRAError, ArithmeticError):
    """Likelihood quadrature could not produce a finite value."""
    pass


class OptimizerError(MRAError, ValueError):
    pass


class ConfigError(MRAError, ValueError):
    pass


class FitError(MRAError, ValueError):
    pass


class BatchFormatError(MRAError, ValueError):
    pass
