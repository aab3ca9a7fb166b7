"""Exception hierarchy shared by all modules."""


class ArtifactError(Exception):
    """Base class for every error raised by the package."""


class DomainError(ArtifactError):
    """A point lies on or outside the boundary of a chart image."""


class BranchError(ArtifactError):
    """A multivalued evaluation could not be resolved to a branch."""


class PoleError(ArtifactError):
    """A vector field was evaluated at one of its poles."""


class SingularityError(ArtifactError):
    """An observable was evaluated on its singular set."""


class StepError(ArtifactError):
    """Richardson extrapolation of a flow derivative did not settle."""


class NormalizationError(ArtifactError):
    """A field pair cannot be brought to normalized slit form."""


class NaNError(ArtifactError):
    """A path produced a non-finite value."""


class LiftError(ArtifactError):
    """Backward integration for the trace left the chart domain."""


class DiagonalError(ArtifactError):
    """A two-point kernel was evaluated on the diagonal."""


class BoundaryError(ArtifactError):
    """A kernel was evaluated outside the closed domain."""


class PathError(ArtifactError):
    """A contour passes too close to a zero of the integrand denominator."""


class QuadratureError(ArtifactError):
    """Estimated quadrature error exceeds the allowed bound."""


class FactorizationError(ArtifactError):
    """The covariance matrix could not be factorized even after jitter."""


class EnsembleError(ArtifactError):
    """Too many Monte Carlo paths were stopped before the target time."""


class ConfigError(ArtifactError):
    """A configuration file is malformed or inconsistent."""
