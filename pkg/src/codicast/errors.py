"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: config errors exit 2, data
errors exit 3, shape/version errors exit 4.
"""

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_SHAPE = 4


class CodicastError(Exception):
    """Base class for all package errors."""


class ConfigError(CodicastError):
    """Invalid run configuration (unknown keys, bad values)."""


class DataError(CodicastError):
    """Malformed or unreadable data files (GWF container, payloads)."""


class ShapeError(CodicastError):
    """Dimension or channel mismatch between components."""


class CheckpointError(CodicastError):
    """Unreadable checkpoint or version mismatch."""
