"""Shared exception types."""


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending field path."""


class TrainingError(RuntimeError):
    """Training aborted; the message carries the failing step index."""
