"""Base exception shared by every package, plus configuration errors."""


class DSLNetError(Exception):
    """Root of all project-specific errors."""


class ConfigError(DSLNetError, ValueError):
    """Invalid or unreadable experiment configuration."""
