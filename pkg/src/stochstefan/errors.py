"""Exception and warning types shared across the package."""


class StochStefanError(Exception):
    """Base class for errors raised by this package."""


class ConfigurationError(StochStefanError, ValueError):
    """Invalid or inconsistent input parameters."""


class DomainError(StochStefanError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class NumericalError(StochStefanError, ArithmeticError):
    """A computation produced a non-finite value or failed to converge."""


class EvaluationRangeError(ConfigurationError):
    """A point falls outside a precomputed evaluation range."""


class QuadratureWarning(UserWarning):
    """Quadrature may not have reached the requested tolerance."""


class RangeWarning(UserWarning):
    """Output grid does not cover the data it is asked to represent."""
