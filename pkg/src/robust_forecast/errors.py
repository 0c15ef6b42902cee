"""Exception types shared across the package."""


class RobustForecastError(Exception):
    """Base class for all package errors."""


class InputError(RobustForecastError, ValueError):
    """Malformed or inconsistent user input."""


class NumericalFailure(RobustForecastError, RuntimeError):
    """An optimizer failed to converge or a cross-check disagreed."""


class EmptyIdentifiedSet(RobustForecastError):
    """No parameter value is consistent with the reduced-form target."""
