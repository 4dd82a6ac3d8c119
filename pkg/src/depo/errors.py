"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Raised when a config value, game component, or argument is invalid.

    The message names the offending field.
    """


class OptimizationError(RuntimeError):
    """Raised when an iterative solver fails to make sense of its inputs."""
