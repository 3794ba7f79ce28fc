"""Exception hierarchy shared by all esrshift modules."""


class EsrShiftError(Exception):
    """Base class for every error raised by the package."""


class DimensionMismatch(EsrShiftError, ValueError):
    pass


class NonPositiveLabel(EsrShiftError, ValueError):
    pass


class NonFiniteValue(EsrShiftError, ValueError):
    pass


class EmptyInput(EsrShiftError, ValueError):
    pass


class DegenerateData(EsrShiftError, ValueError):
    pass


class Infeasible(EsrShiftError, ValueError):
    pass


class AllWeightsZero(EsrShiftError, ValueError):
    pass


class WindowTooLong(EsrShiftError, ValueError):
    pass


class UnsupportedWindow(EsrShiftError, ValueError):
    pass


class ZeroTrueValue(EsrShiftError, ValueError):
    pass


class NonPositiveBaseline(EsrShiftError, ValueError):
    pass


class ConfigError(EsrShiftError, ValueError):
    """Invalid configuration value; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class NotConverged(EsrShiftError, RuntimeError):
    """Solver hit its iteration cap. ``solution`` holds the best iterate."""

    def __init__(self, message: str, solution=None):
        super().__init__(message)
        self.solution = solution


class ConvergenceWarning(UserWarning):
    """Issued when an iterative solver returns its best non-converged iterate."""
