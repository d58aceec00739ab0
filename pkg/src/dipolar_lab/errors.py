"""Exception hierarchy shared by all modules.

Each class carries the CLI exit code it maps to.
"""


class LabError(Exception):
    exit_code = 1


class UsageError(LabError, ValueError):
    """Operation called with incompatible inputs (wrong space, grid mismatch)."""

    exit_code = 1


class ValidationError(LabError, ValueError):
    """Parameters or configuration outside their admissible range."""

    exit_code = 1


class KernelValidationError(ValidationError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class NumericalAccuracyError(LabError, ArithmeticError):
    """A self-certified quadrature or extrapolation failed to converge."""

    exit_code = 2


class InconclusiveFitError(NumericalAccuracyError):
    pass


class StepSizeError(NumericalAccuracyError):
    pass


class DivergenceError(LabError, ArithmeticError):
    """NaN or Inf appeared while integrating a trajectory."""

    exit_code = 3

    def __init__(self, message, step=None, t=None, N=None):
        super().__init__(message)
        self.step = step
        self.t = t
        self.N = N
