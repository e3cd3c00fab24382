"""Exception types raised across the package."""


class OtfsFtnError(Exception):
    """Base class for all package errors."""


class DimensionError(OtfsFtnError, ValueError):
    """An array or grid has a shape that does not match the system configuration."""


class InvalidInputError(OtfsFtnError, ValueError):
    """An input violates a numerical precondition (e.g. a non-Hermitian matrix)."""


class ConfigurationError(OtfsFtnError, ValueError):
    """A configuration value is missing, unknown or out of range."""


class ConditioningError(OtfsFtnError, ArithmeticError):
    """A factorization hit a pivot that is numerically zero."""
