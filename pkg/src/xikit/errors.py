"""Exception hierarchy shared by all xikit modules."""


class XikitError(Exception):
    """Base class for all xikit errors."""


class DomainError(XikitError):
    """Scalar argument lies on the logarithm branch cut."""


class NotDissipative(XikitError):
    """Operator has an imaginary part with an eigenvalue below tolerance."""


class Singular(XikitError):
    """Operator fails the invertibility test."""


class QuadratureFailure(XikitError):
    """Adaptive quadrature exhausted its panel budget."""


class NearSingular(XikitError):
    """Hermitian operator has an eigenvalue inside the exclusion band."""


class OutOfSupport(XikitError):
    """Evaluation point lies outside (or too close to the edge of) the grid."""


class GridTooCoarse(XikitError):
    """Sampled density has too few nodes for the requested transform."""


class BadInvolution(XikitError):
    """Signature matrix J fails J*J = I or J = J*."""


class PoleProximity(XikitError):
    """Evaluation point too close to a spectrum."""


class ArgTrackingLost(XikitError):
    """Determinant passed too close to zero while tracking its argument."""


class SupportTooSmall(XikitError):
    """Sampled function does not cover the spectra with margin."""


class EigenvalueCrossesWindowEdge(XikitError):
    """An eigenvalue sits on a spectral window edge at a quadrature node."""


class FactorizationFailure(XikitError):
    """Perturbation is not positive semidefinite, no Hermitian square root."""


class NotInLambda(XikitError):
    """Boundary value T(lambda) is not invertible on the factor space."""


class WindowEmpty(XikitError):
    """No usable evaluation points in the requested window."""


class ZeroGreen(XikitError):
    """Green's function vanishes where its reciprocal is required."""


class ConfigError(XikitError):
    """Scenario configuration is missing a key or holds an ill-typed value."""
