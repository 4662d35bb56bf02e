"""Exception types shared across the package."""


class SSOTError(Exception):
    """Base class for all errors raised by :mod:`ssot`."""


class DomainError(SSOTError, ValueError):
    """An argument lies outside the domain of the operation."""


class ShapeError(SSOTError, ValueError):
    """Array lengths or dimensions do not line up."""


class PreconditionError(DomainError):
    """A stated precondition of the operation is violated."""


class DegenerateCycleError(DomainError):
    """The requested cycle exchanges no work (or no heat) and is meaningless."""
