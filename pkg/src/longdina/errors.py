"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid configuration value (bad K, unsupported J, non-PD correlation, ...)."""


class DimensionError(ValueError):
    """Array arguments have inconsistent shapes."""


class InputError(ValueError):
    """Non-finite or otherwise unusable data values."""


class DegenerateLikelihoodError(RuntimeError):
    """All posterior mass is numerically zero."""


class EmDivergenceError(RuntimeError):
    """EM log-likelihood decreased beyond tolerance (monotonicity breach)."""


class InvariantViolation(RuntimeError):
    """Internal state violated an invariant that should hold by construction."""
