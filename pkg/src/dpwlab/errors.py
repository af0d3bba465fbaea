"""Exception taxonomy shared across the package.

ConfigError maps to CLI exit code 2, NumericalError (and subclasses) to 3.
"""


class ConfigError(ValueError):
    """Malformed or inconsistent configuration / input schema."""


class NumericalError(RuntimeError):
    """A numeric operation failed its contract (residual, conditioning, ...)."""


class FactorizationError(NumericalError):
    """A matrix or loop factorization could not be completed to tolerance."""


class AdmissibilityError(NumericalError):
    """A gauge / uniton / dressing precondition is violated on the grid."""
