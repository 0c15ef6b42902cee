"""Robust point forecasts of discrete outcomes from probability bounds."""

__version__ = "0.1.0"

from .decision_rules import BinaryBounds, Decision, LossSpec, MultinomialBounds, robust_forecasts
from .errors import EmptyIdentifiedSet, InputError, NumericalFailure, RobustForecastError
from .linear_model import LinearSetSpec, extreme_probs_binary, extreme_probs_multinomial, feasible_phi_interval

__all__ = [
    "__version__", "BinaryBounds", "Decision", "LossSpec", "MultinomialBounds", "robust_forecasts",
    "EmptyIdentifiedSet", "InputError", "NumericalFailure", "RobustForecastError",
    "LinearSetSpec", "extreme_probs_binary", "extreme_probs_multinomial", "feasible_phi_interval",
]
