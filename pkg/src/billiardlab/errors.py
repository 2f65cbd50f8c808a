"""Exception types shared across the package."""


class BilliardError(Exception):
    """Base class for all billiardlab errors."""


class DomainError(BilliardError):
    """Input lies outside the domain where an operation is defined
    (equator blow-up, Klein disc boundary, branch point, ...)."""


class SingularityError(BilliardError):
    """A state came within the guard radius of a singular set.

    ``which`` names the offending object ("center1", "center2",
    "equator", ...); ``location`` is the offending coordinates.
    """

    def __init__(self, message: str, which: str = "", location=None):
        super().__init__(message)
        self.which = which
        self.location = location


class ChartMismatchError(BilliardError, TypeError):
    """Arithmetic attempted between values in different charts."""


class ConvergenceError(BilliardError):
    """An iterative numerical procedure failed to converge."""
