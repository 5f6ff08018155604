"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid or inconsistent simulation parameters."""


class TruncationError(RuntimeError):
    """Bond truncation discarded more weight than the hard limit allows."""


class IntegrationError(RuntimeError):
    """A numerical integration step violated a state invariant."""
