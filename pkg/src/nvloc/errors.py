"""Exception hierarchy shared by the library and the CLI exit-code mapping."""


class NVLocError(Exception):
    """Base class for all nvloc errors."""


class ValidationError(NVLocError, ValueError):
    """Input violates a documented precondition."""


class SingularPointError(ValidationError):
    """Field evaluated exactly on a line current."""


class QuadratureError(NVLocError, ArithmeticError):
    """Adaptive quadrature failed to reach the requested tolerance."""

    def __init__(self, message, *, estimate=None, abserr=None):
        super().__init__(message)
        self.estimate = estimate
        self.abserr = abserr


class FitError(NVLocError):
    """A data fit could not be performed or did not converge."""

    def __init__(self, message, *, residual=None):
        super().__init__(message)
        self.residual = residual


class UnderResolvedError(FitError):
    pass


class NoOscillationError(FitError):
    pass


class AmbiguousBranchError(FitError):
    pass


class InsufficientDataError(FitError):
    pass


class InconsistentInputsError(FitError):
    pass


class InversionError(NVLocError):
    """The position inversion has no acceptable solution."""


class NoConsistentPositionError(InversionError):
    def __init__(self, message, *, residual=None, x=None, z=None):
        super().__init__(message)
        self.residual = residual
        self.x = x
        self.z = z


class OutOfRangeError(InversionError):
    pass


class UnstableInversionError(InversionError):
    def __init__(self, message, *, failure_fraction):
        super().__init__(message)
        self.failure_fraction = failure_fraction


class DataFormatError(NVLocError, ValueError):
    """An input file is malformed; the message names the file and line."""

    def __init__(self, message, *, path=None, line=None):
        where = f"{path}:{line}: " if line is not None else (f"{path}: " if path else "")
        super().__init__(where + message)
        self.path = path
        self.line = line
