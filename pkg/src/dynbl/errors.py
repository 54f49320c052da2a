"""Exception hierarchy.

Every error raised deliberately by the library derives from ``DBLError`` so the
command line front end can map it to an exit code.  Errors that signal bad
input are ``ValidationError`` subclasses; errors that signal a numerical
breakdown are ``NumericalError`` subclasses.
"""


class DBLError(Exception):
    """Base class for library errors."""


class ValidationError(DBLError, ValueError):
    """Input violates a documented precondition."""


class NumericalError(DBLError, ArithmeticError):
    """A computation could not be carried out reliably."""


class ShapeMismatch(ValidationError):
    pass


class NotPositiveDefinite(ValidationError):
    """Raised by the Cholesky factorisation.

    ``pivot`` is the zero-based index of the first pivot that failed.
    """

    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot


class NotPD(ValidationError):
    """A covariance difference that must be positive definite is not."""


class SingularObservationCov(NumericalError):
    pass


class SingularInnerBlock(NumericalError):
    pass


class SingularViewGram(NumericalError):
    pass


class SingularOmega(ValidationError):
    pass


class DegeneratePick(ValidationError):
    pass


class MissingHistory(ValidationError):
    pass


class UnsortedHorizons(ValidationError):
    pass


class NotComparable(ValidationError):
    pass


class GridOutOfRange(ValidationError):
    pass


class GammaOutOfRange(ValidationError):
    pass


class IntervalMismatch(ValidationError):
    pass


class NonPositiveWealth(NumericalError):
    pass


class BankruptcyUnderflow(NumericalError):
    """Wealth reached zero or below on at least one path.

    ``paths`` holds the indices of the offending paths.
    """

    def __init__(self, message, paths=None):
        super().__init__(message)
        self.paths = paths
