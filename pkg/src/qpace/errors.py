"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 1, NumericsError -> 2,
ArtifactError -> 3.
"""


class QpaceError(Exception):
    """Base class for all package errors."""


class ConfigError(QpaceError):
    """Invalid configuration, arguments, or preconditions."""


class NumericsError(QpaceError):
    """Numerical failure: non-finite values, eigensolver trouble, cap overflow."""


class ArtifactError(QpaceError):
    """Corrupt, missing, or incompatible on-disk artifacts."""
