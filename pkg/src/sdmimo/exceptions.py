"""Exception types raised across the package."""


class DimensionError(ValueError):
    """Array shapes do not agree with each other or with a configuration."""


class ConfigurationError(ValueError):
    """A configuration value is invalid or a sampler constraint is infeasible."""


class NumericalError(ArithmeticError):
    """A numerical routine could not produce a meaningful result."""
