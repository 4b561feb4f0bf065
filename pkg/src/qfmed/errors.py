"""Exception hierarchy.

User/data problems derive from :class:`InvalidInputError` (CLI exit code 1);
numerical breakdowns derive from :class:`NumericError` (CLI exit code 2).
"""


class QfmedError(Exception):
    """Base class for all package errors."""


class InvalidInputError(QfmedError):
    """Malformed data, arguments, or preconditions violated by the caller."""


class InvalidConfigError(InvalidInputError):
    """A configuration value is out of its admissible range."""


class GridMismatchError(InvalidInputError):
    """Two grid-sampled functions do not share the same grid."""


class NoContrastError(InvalidInputError):
    """Treatment contrast requested but only one arm is present."""


class ReconciliationError(InvalidInputError):
    """Subject identifiers do not reconcile across input tables."""

    def __init__(self, message, missing_ids=()):
        super().__init__(message)
        self.missing_ids = tuple(missing_ids)


class NumericError(QfmedError):
    """A computation failed for numerical reasons."""


class NumericOverflowError(NumericError):
    """A value overflowed the double range; reports the offending grid point."""

    def __init__(self, message, grid_index=None, t=None):
        super().__init__(message)
        self.grid_index = grid_index
        self.t = t


class SingularDesignError(NumericError):
    """The regression design matrix is numerically rank deficient."""

    def __init__(self, message, columns=()):
        super().__init__(message)
        self.columns = tuple(columns)


class DegenerateSystemError(NumericError):
    """A linear system is degenerate (e.g. zero covariance operator)."""


class BootstrapFailureError(NumericError):
    """Too many bootstrap replicates had to be discarded."""
