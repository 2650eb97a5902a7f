"""Exception hierarchy shared by every module."""


class AISError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(AISError, ValueError):
    """Invalid configuration; ``path`` names the offending field when known."""

    def __init__(self, message: str, path: str | None = None):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class OracleError(AISError):
    """Quadrature failed to reach the requested tolerance."""

    def __init__(self, message: str, estimate: float, error_bound: float):
        self.estimate = estimate
        self.error_bound = error_bound
        super().__init__(f"{message} (last estimate {estimate!r}, error bound {error_bound!r})")


class PreconditionError(AISError, ValueError):
    """An operation was called with arguments outside its contract."""


class DegenerateProposalError(AISError):
    """Every proposal numerator is zero, so no distribution can be formed."""


class SamplingError(AISError, RuntimeError):
    """A target evaluation or weight was not a finite nonnegative number."""


class EstimatorError(AISError):
    """An importance sampling estimate is undefined (zero total weight)."""


class StructuralError(AISError):
    """The partition tree violates one of its structural invariants."""
