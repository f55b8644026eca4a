"""Exception hierarchy shared by every module of the package."""


class VCDownscaleError(Exception):
    """Base class for all package errors."""


class ConfigurationError(VCDownscaleError, ValueError):
    """Invalid user-supplied configuration or specification."""


class DomainError(VCDownscaleError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class DimensionError(VCDownscaleError, ValueError):
    """Inconsistent array shapes or mismatched domains."""


class NumericalError(VCDownscaleError, ArithmeticError):
    """A matrix factorization failed even after jitter escalation."""


class DiagnosticsError(VCDownscaleError, RuntimeError):
    """An MCMC chain failed a runtime health check."""


class DataError(VCDownscaleError, ValueError):
    """Malformed input data file."""
