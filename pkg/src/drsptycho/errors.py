"""Exception types shared across the package."""


class DRSError(Exception):
    """Base class for all errors raised by drsptycho."""


class DimensionError(DRSError, ValueError):
    """Array shapes are inconsistent with the operator or with each other."""


class ConfigurationError(DRSError, ValueError):
    """Invalid parameter or configuration value."""


class SingularityError(DRSError, ArithmeticError):
    """A Gram diagonal entry needed for a pseudo-inverse vanishes."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class NumericalFailure(DRSError, ArithmeticError):
    """An iteration produced non-finite values or left its proven bounds."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class CapacityError(DRSError, MemoryError):
    """Dense computation requested above the configured size cap."""


class UndefinedMetricError(DRSError, ZeroDivisionError):
    """Metric has a vanishing normalizer."""


class EvaluationError(DRSError, ArithmeticError):
    """A loss or metric cannot be evaluated at the given point."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class ConvergenceError(DRSError, RuntimeError):
    """An inner eigen-solver hit its iteration cap."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history or [])
