"""Exception hierarchy shared across the package."""


class InteractingBSError(Exception):
    """Base class for all package errors."""


class ModelDomainError(InteractingBSError, ValueError):
    """Input outside the domain of a pricing or model formula."""


class SingularityError(ModelDomainError):
    """Bubble amplitude or potential sits on a pole of the bubble/potential map."""


class CoverageError(ModelDomainError):
    """Tabulated data do not cover the requested interval."""


class NoRootError(InteractingBSError):
    """The mispricing equation has no sign change on the search bracket."""


class ConvergenceError(InteractingBSError):
    """An iterative solver hit its iteration cap."""


class InstabilityError(InteractingBSError):
    """The PDE stepper produced non-finite values."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class ExtrapolationError(ModelDomainError):
    """A path sample lies outside the solved price surface."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class ParseError(InteractingBSError, ValueError):
    """Malformed market-data or configuration input."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class InsufficientHistoryError(InteractingBSError, ValueError):
    """Estimation window longer than the available history."""


class CalibrationInfeasibleError(InteractingBSError):
    """Too many days failed the pointwise inversion to fit a curve."""
