"""Exception hierarchy shared by all wdef modules."""


class WdefError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(WdefError, ValueError):
    pass


class OutOfHalfspaceError(WdefError, ValueError):
    """A point that must lie in front of the panel (z > 0) does not."""


class SingularGeometryError(WdefError, ValueError):
    """A scatterer coincides with an array element."""


class EvanescentRegionError(WdefError, ValueError):
    """A wavenumber sample lies outside the visible region kx^2 + ky^2 < 1."""


class DegenerateBoundaryError(WdefError, ValueError):
    """The scatterer sits directly above a panel edge; the boundary ellipse degenerates."""


class EmptySpectrumError(WdefError, ValueError):
    pass


class InsufficientBoundaryError(WdefError):
    """Too few boundary samples to attempt an ellipse fit."""


class DegenerateFitError(WdefError):
    """The design matrix of a conic fit is rank deficient."""


class FitFailureError(WdefError):
    """No admissible (elliptic) eigenvector exists."""


class NotAxisAlignedError(WdefError):
    """A fitted conic is too far from the centred, axis-aligned form."""


class InconsistentCoefficientsError(WdefError, ValueError):
    pass


class InvalidDirectionError(WdefError, ValueError):
    """A direction-cosine estimate falls outside the unit disc."""


class ConfigError(WdefError, ValueError):
    """Invalid sweep configuration; ``field`` names the offending entry."""

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        super().__init__(message)
