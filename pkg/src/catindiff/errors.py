"""Exception types shared across the package."""

__all__ = [
    "DomainError",
    "GridError",
    "StabilityError",
    "ConsistencyError",
    "ConfigError",
]


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class GridError(ValueError):
    """A discretization grid cannot represent the requested quantity."""


class StabilityError(RuntimeError):
    """A time integration left its certified stability envelope."""


class ConsistencyError(RuntimeError):
    """Two redundant computation paths disagree beyond tolerance."""


class ConfigError(ValueError):
    """A configuration file is malformed or internally inconsistent."""
