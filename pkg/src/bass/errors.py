"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: invalid input -> 2, numeric failure -> 3.
"""


class BassError(Exception):
    """Base class for all package errors."""


class InvalidInputError(BassError):
    """A caller violated an input contract (bad value, unknown id, ...)."""


class DimensionError(InvalidInputError):
    """Array shapes are mutually inconsistent."""


class NumericError(BassError):
    """A numerical operation failed (singular or non-PSD matrix, ...)."""
