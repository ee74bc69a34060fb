"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class EnaqtError(Exception):
    """Base class for every error raised by this package."""


class ParameterError(EnaqtError, ValueError):
    """A model or bath parameter lies outside its allowed domain."""


class DomainError(EnaqtError, ValueError):
    """Inputs are individually valid but the computation is undefined for them.

    Raised e.g. for non-positive eigenvalues (``1 - 2 n(eps) <= 0``) or a
    vanishing reference current.
    """


class EigensolverError(EnaqtError, RuntimeError):
    """The tridiagonal eigensolver failed to converge."""

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


class ConvergenceError(EnaqtError, RuntimeError):
    """An iterative validator did not reach its tolerance."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class CutoffError(ConvergenceError):
    """Truncated Fock results are not converged in the occupation cutoff."""
