"""Exception hierarchy shared by all fairint modules.

The CLI maps these onto exit codes: config/usage problems exit 2, data
problems exit 3, training or metric failures exit 4.
"""


class FairIntError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(FairIntError):
    """Tensor extents are incompatible with the requested operation."""


class DomainError(FairIntError):
    """An input lies outside an operation's mathematical domain (e.g. log of 0)."""


class NumericError(FairIntError):
    """A forward computation produced NaN or Inf; never silently propagated."""


class UsageError(FairIntError):
    """The API was called in a way its contract forbids."""


class ConfigError(FairIntError):
    """A configuration value is missing, malformed, or out of range."""


class DataError(FairIntError):
    """A dataset, CSV file, or schema is malformed or inconsistent."""


class MetricError(FairIntError):
    """A metric is undefined for the given inputs (e.g. a group is absent)."""


class TrainingError(FairIntError):
    """Optimization failed, typically by divergence to non-finite loss."""
