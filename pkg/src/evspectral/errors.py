"""Exception types raised across the package."""


class EVError(Exception):
    """Base class for all package errors."""


class NegativeCoordinate(EVError, ValueError):
    pass


class ZeroVector(EVError, ValueError):
    pass


class DimensionMismatch(EVError, ValueError):
    pass


class NegativeInput(EVError, ValueError):
    pass


class OutOfRange(EVError, ValueError):
    pass


class InfeasibleTheta(EVError, ValueError):
    pass


class NonFiniteInput(EVError, ValueError):
    pass


class DegenerateColumn(EVError, ValueError):
    pass


class ZeroXi(EVError, ValueError):
    """Some xi_i(w) is zero, so log xi is undefined."""


class SingularDesign(EVError, ValueError):
    pass


class RankDeficient(EVError, ValueError):
    """The Gram matrix of the basis differences is (numerically) singular."""


class SingularEndpointCovariance(EVError, ValueError):
    pass


class MissingCovariance(EVError, ValueError):
    pass


class UnsupportedModel(EVError, TypeError):
    pass


class EnvelopeViolation(EVError, RuntimeError):
    """The rejection envelope was exceeded at runtime."""


class InvalidP(EVError, RuntimeError):
    """Mixing probability of the sampler left [0, 1] beyond round-off."""


class ParseError(EVError, ValueError):
    pass


class ConfigError(EVError, ValueError):
    pass


class InvalidSpectralMeasure(EVError, ValueError):
    pass


class DegenerateBasisWarning(UserWarning):
    """Two basis elements coincide on the validation grid."""
