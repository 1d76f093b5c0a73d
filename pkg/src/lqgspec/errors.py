"""Exception hierarchy shared by all lqgspec modules."""


class LQGError(Exception):
    """Base class for every error raised by this package."""


class InvalidSpecError(LQGError, ValueError):
    pass


class DomainError(LQGError, ValueError):
    """A parameter lies outside the domain where the quantity is defined."""


class InsufficientProbesError(LQGError):
    pass


class EmptyRegionError(LQGError, ValueError):
    pass


class GridMismatchError(LQGError, ValueError):
    pass


class PreconditionError(LQGError, ValueError):
    pass


class QuadratureError(LQGError, RuntimeError):
    pass


class CapExceededError(LQGError, RuntimeError):
    """A path simulation hit its step cap before reaching the target level."""


class ResolutionError(LQGError):
    """Requested time is below the range resolved by the truncated spectrum."""


class ConvergenceError(LQGError, RuntimeError):
    """Eigensolver failure; ``report`` holds whatever was computed."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report if report is not None else {}
