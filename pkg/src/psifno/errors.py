"""Exception types raised across the package."""


class PsifnoError(Exception):
    """Base class for all package errors."""


class HermitianViolation(PsifnoError):
    """Coefficients of a real field fail conjugate symmetry beyond tolerance."""


class BadTruncation(PsifnoError):
    """Requested mode truncation exceeds the stored resolution."""


class DimensionMismatch(PsifnoError):
    """Field/operator shapes or channel counts are inconsistent."""


class UnknownActivation(PsifnoError):
    """Activation tag is not one of the supported scalar functions."""


class InsufficientResolution(PsifnoError):
    """Input data is sampled too coarsely for the requested operation."""


class BadParameters(PsifnoError):
    """Scalar parameters outside their admissible range."""


class CoercivityViolation(PsifnoError):
    """Darcy coefficient fails the operative coercivity/contraction bounds."""


class NonFiniteIterate(PsifnoError):
    """A fixed-point iterate became NaN/Inf."""


class CflViolation(PsifnoError):
    """Time-step violates the advective CFL restriction."""


class NonFiniteState(PsifnoError):
    """A time-stepping state became NaN/Inf."""


class CalibrationFailed(PsifnoError):
    """Difference-quotient step size underflowed before meeting the accuracy target."""


class ConfigInvalid(PsifnoError):
    """Experiment configuration failed validation."""


class DegenerateFit(PsifnoError):
    """Rate fit attempted on fewer than two rows or non-positive errors."""
