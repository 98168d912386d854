"""Shared exception types."""


class ShapeMismatchError(ValueError):
    """Two parameter vectors (or a network and a batch) disagree structurally."""


class ConfigError(ValueError):
    """An experiment or partition configuration is invalid or infeasible."""
