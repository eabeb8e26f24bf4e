"""Exception hierarchy shared by every subsystem.

The CLI maps these onto its exit codes: data errors exit 1, configuration
and usage errors exit 2, training divergence exits 3.
"""


class MemeGraphError(Exception):
    """Base class for all package errors."""


class DimensionError(MemeGraphError, ValueError):
    """Operand shapes do not agree."""


class ConfigError(MemeGraphError, ValueError):
    """Invalid configuration value or unknown option."""


class DataError(MemeGraphError, ValueError):
    """Malformed or semantically invalid input data."""


class UsageError(MemeGraphError, RuntimeError):
    """An operation was called in a context it does not support."""


class TrainingError(MemeGraphError, RuntimeError):
    """Optimization produced a non-finite quantity."""
