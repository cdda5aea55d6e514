class KacError(Exception):
    """Base class for every error raised by the kac_decay package."""


class ValidationError(KacError, ValueError):
    """Invalid argument, dimension, index or config field."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class DenseSizeError(ValidationError):
    """A dense matrix would exceed the configured size cap."""


class TailMassError(ValidationError):
    """Poisson truncation leaves more tail mass than allowed."""


class ConditioningError(KacError):
    """Covariance is not positive-definite or too badly conditioned."""


class QuadratureError(KacError):
    """Quadrature under-resolved, or an information curve does not decay."""


class OracleMismatchError(KacError):
    """Symbolic and Monte Carlo oracles disagree beyond tolerance."""
