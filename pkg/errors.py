class MlnHardyError(Exception):
    """Base class for every error raised by the library."""


class DomainError(MlnHardyError, ValueError):
    """A parameter lies outside the range where the quantity is defined."""


class MeshError(DomainError):
    """The geometry cannot be discretized as requested."""


class SizeGuardError(MlnHardyError):
    """Dense storage would exceed the interior-node guard."""


class ConfigError(MlnHardyError):
    """Invalid or incomplete experiment configuration."""


class CoercivityError(MlnHardyError):
    """Non-positive curvature met during a conjugate-direction solve."""

    def __init__(self, message, gamma=None, iteration=None, curvature=None):
        super().__init__(message)
        self.gamma = gamma
        self.iteration = iteration
        self.curvature = curvature


class ConvergenceError(MlnHardyError):
    """Iteration limit reached before the residual target."""

    def __init__(self, message, residual_history=None):
        super().__init__(message)
        self.residual_history = list(residual_history or [])


class SchemeError(MlnHardyError):
    """A solve inside an iterative scheme failed."""

    def __init__(self, message, step=None, cause=None):
        super().__init__(message)
        self.step = step
        self.cause = cause
