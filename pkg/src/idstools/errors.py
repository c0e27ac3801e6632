"""Exception types shared across the package."""


class IdsError(Exception):
    """Base class for library errors."""


class ConfigError(IdsError, ValueError):
    """Invalid experiment configuration."""


class ResourceCapError(IdsError):
    """A configured size cap would be exceeded."""


class NumericalError(IdsError, ArithmeticError):
    """A factorization or eigensolver failed."""
