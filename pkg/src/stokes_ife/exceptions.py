"""Exception types raised by the solver pipeline."""


class StokesIFEError(Exception):
    """Base class for all package errors."""


class DegenerateTriangle(StokesIFEError, ValueError):
    """A triangle with (numerically) zero or negative area."""


class GeometryError(StokesIFEError):
    """Base class for interface/mesh geometry failures."""


class AssumptionViolated(GeometryError):
    """The interface crosses an element boundary too often; refine the mesh."""


class NoRoot(GeometryError):
    """Level-set signs agree at both ends of a segment."""


class DegenerateCut(GeometryError):
    """A cut leaves one sub-element with negligible area.

    ``majority`` is the sign (+1/-1) of the side owning almost all of the
    element, so callers can relabel it as a non-interface element.
    """

    def __init__(self, message, majority=0):
        super().__init__(message)
        self.majority = majority


class SingularSystem(StokesIFEError):
    """A local dense system could not be solved."""


class MissingCutData(StokesIFEError):
    """An interface element has no cut or no IFE basis attached."""


class InvalidParams(StokesIFEError, ValueError):
    """Scheme parameters out of range."""


class SingularMatrix(StokesIFEError):
    """The global sparse factorization broke down."""


class ResidualTooLarge(UserWarning):
    """Emitted when the relative residual of a solve exceeds the tolerance."""
