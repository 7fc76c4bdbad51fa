"""Exception types shared across the package."""


class AggKernelError(Exception):
    """Base class for package-specific failures."""


class InvalidParameterError(AggKernelError, ValueError):
    """A configuration value is out of its admissible range."""


class IndexAlignmentError(AggKernelError, ValueError):
    """Grids or downsampling factors do not line up index-wise."""


class InvalidInputError(AggKernelError, ValueError):
    """Input data violates a precondition (shape, sign, mass, ...)."""


class SolverDivergenceError(AggKernelError, RuntimeError):
    """The time integration produced non-finite values."""

    def __init__(self, step: int, message: str | None = None):
        self.step = step
        super().__init__(message or f"solver state became non-finite at step {step}")


class PositivityError(AggKernelError, RuntimeError):
    """Cell averages dropped below zero beyond the roundoff tolerance."""

    def __init__(self, step: int, message: str | None = None):
        self.step = step
        super().__init__(message or f"positivity lost at step {step}")


class BudgetError(AggKernelError, RuntimeError):
    """A guarded resource budget (memory, subset count) would be exceeded."""
