"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A configuration file or config object violates the documented schema."""


class FitError(RuntimeError):
    """A least-squares or maximum-likelihood fit failed or is degenerate."""


class EstimationError(RuntimeError):
    """An estimator cannot produce a defined value from the given data."""


class UndefinedEstimateError(EstimationError):
    """A ratio estimator has a zero or empty reference (e.g. empty sidebands)."""
