"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration value or unknown configuration key."""


class ArityMismatchError(ValueError):
    """Phase function arity does not match the supplied configuration."""


class StepBudgetError(ValueError):
    """Requested flow time exceeds the configured step budget."""


class OrderCapError(ValueError):
    """Requested cumulant/expansion order exceeds the hard cap."""


class QuadratureError(RuntimeError):
    """Monte Carlo quadrature cannot produce a usable estimate."""
