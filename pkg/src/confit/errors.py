"""Exception types shared across the package."""


class ConfitError(Exception):
    """Base class for all package-specific errors."""


class DataError(ConfitError):
    """Raised for malformed or unusable input data."""


class ConfigError(ConfitError):
    """Raised for invalid experiment configuration (CLI exit code 2)."""


class InfeasibleConstraintsError(ConfitError):
    """Raised when a constraint set (or an intersection) has no feasible point."""
