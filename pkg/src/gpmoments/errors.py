"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes: validation problems exit with 1,
numerical failures with 2, and I/O errors (plain ``OSError``) with 3.
"""


class GPMomentsError(Exception):
    """Base class for all errors raised by the package."""


class InvalidInputError(GPMomentsError, ValueError):
    """An argument or configuration field violates its contract."""

    def __init__(self, message, field=None):
        self.field = field
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)


class OutOfRangeError(InvalidInputError):
    """A moment value lies outside the range of a moment map."""


class NumericFailureError(GPMomentsError, ArithmeticError):
    """Quadrature or factorization did not reach the requested accuracy."""

    def __init__(self, message, achieved=None):
        self.achieved = achieved
        if achieved is not None:
            message = f"{message} (achieved error estimate {achieved:.3g})"
        super().__init__(message)


class NotEmbeddableError(NumericFailureError):
    """Circulant embedding produced significantly negative eigenvalues."""


class NotPositiveDefiniteError(NumericFailureError):
    """Cholesky factorization failed even after jitter escalation."""
