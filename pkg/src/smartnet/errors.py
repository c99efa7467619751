"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class SmartnetError(Exception):
    exit_code = 1


class ModelError(SmartnetError, ValueError):
    """Invalid model, pattern, or dimension mismatch."""

    exit_code = 4


class NumericalError(SmartnetError, ArithmeticError):
    """A numerical routine failed (singular system, divergence, ...)."""

    exit_code = 5


class UnstableModelError(NumericalError):
    def __init__(self, radius, message=None):
        self.radius = float(radius)
        super().__init__(message or f"model is not stable (spectral radius {self.radius:.6g})")


class ConvergenceError(NumericalError):
    pass


class DataFileError(SmartnetError, OSError):
    """Unreadable or malformed input file."""

    exit_code = 3
