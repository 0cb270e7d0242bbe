"""Exception types raised across the package."""


class TreeSpectraError(Exception):
    """Base class for all package errors."""


class DomainError(TreeSpectraError, ValueError):
    """An argument lies outside the domain of the operation."""


class HorizonExceededError(TreeSpectraError):
    """A radius or generation beyond the materialized horizon was requested."""


class InconclusiveError(TreeSpectraError):
    """Finite data cannot decide convergence of a series or integral."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class UnsupportedOperationError(TreeSpectraError):
    """The operation is not defined for this kind of input (e.g. recurrent tree)."""


class IncompleteDataError(TreeSpectraError):
    """The potential is not specified on the requested range."""


class InapplicableError(TreeSpectraError):
    """A theorem's hypothesis does not hold for the given input."""


class SizeCapError(TreeSpectraError):
    """An explicit discretization would exceed the configured size cap."""
