"""Exception hierarchy shared by every module of the package."""


class IcsError(Exception):
    """Base class for all errors raised by icsdetect."""


class InputError(IcsError, ValueError):
    """Malformed user input (shape, finiteness, parameter ranges, files)."""


class NumericError(IcsError, ArithmeticError):
    """An estimator or factorization could not produce a valid result."""


class SingularMatrixError(NumericError):
    """A matrix expected to be symmetric positive definite is not.

    Attributes
    ----------
    index : int or None
        Zero-based index of the failing Cholesky pivot. When the matrix is a
        scatter estimate this is the column that is (nearly) a linear
        combination of the preceding columns, or is (nearly) constant.
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class ConvergenceError(NumericError):
    """Iterative estimator did not converge; ``last`` holds the last iterate."""

    def __init__(self, message, last=None):
        super().__init__(message)
        self.last = last


class ExactFitError(NumericError):
    """An h-subset has a singular covariance (exact-fit situation).

    Attributes
    ----------
    directions : ndarray of shape (m, p)
        Unit vectors spanning the directions in which the subset has zero
        variance.
    """

    def __init__(self, message, directions=None):
        super().__init__(message)
        self.directions = directions
