"""Exception hierarchy shared by all modules."""


class AnosovLabError(Exception):
    """Base class for every error raised by the toolkit."""


class SingularMatrixError(AnosovLabError, ValueError):
    pass


class DimensionMismatchError(AnosovLabError, ValueError):
    pass


class NonRegularElementError(AnosovLabError):
    """The element sits too close to a Weyl chamber wall for a well-defined flag."""


class ConvergenceError(AnosovLabError):
    def __init__(self, message, value_t=None, value_2t=None):
        super().__init__(message)
        self.value_t = value_t
        self.value_2t = value_2t


class IncompleteBallError(AnosovLabError):
    """A query reached beyond the radius where the orbit ball is known to be complete."""


class WindowError(AnosovLabError):
    pass


class MemoryBudgetError(AnosovLabError):
    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class UnsupportedModelError(AnosovLabError):
    pass


class EmptyMeasureError(AnosovLabError):
    pass


class InsufficientMassError(AnosovLabError):
    pass


class ResolutionError(AnosovLabError):
    """Requested scales fall below what the finite sample can resolve."""


class ConfigError(AnosovLabError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
