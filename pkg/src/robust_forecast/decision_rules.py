"""Point forecasts from probability bounds.

Every robust rule for a binary outcome depends on the forecast set only
through the extreme probabilities ``(p_L, p_U)``; for multinomial outcomes
under classification loss the sufficient statistics are the lower
probabilities ``lower[m]`` and the worst-case regret gaps ``regret_gaps[m]``.
All functions here are pure.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .errors import InputError

TIE_TOL = 1e-12
SIMPLEX_TOL = 1e-9

LOSS_KINDS = ("binary", "quadratic", "log", "classification")


@dataclass(frozen=True)
class LossSpec:
    kind: str = "binary"
    a01: float = 1.0  # loss of forecasting 1 when y = 0
    a10: float = 1.0  # loss of forecasting 0 when y = 1
    num_outcomes: int = 2

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise InputError(f"unknown loss kind {self.kind!r}; expected one of {LOSS_KINDS}")
        if self.kind == "binary":
            if self.a01 < 0 or self.a10 < 0 or self.a01 + self.a10 <= 0:
                raise InputError(f"binary loss needs a01, a10 >= 0 with positive sum, got {self.a01}, {self.a10}")
        if self.kind == "classification" and self.num_outcomes < 2:
            raise InputError("classification loss needs at least 2 outcomes")

    @property
    def threshold(self) -> float:
        """Probability cutoff a01 / (a01 + a10) of the binary rules."""
        return self.a01 / (self.a01 + self.a10)


@dataclass(frozen=True)
class BinaryBounds:
    p_L: float
    p_U: float

    def __post_init__(self):
        lo, hi = float(self.p_L), float(self.p_U)
        if not (0.0 <= lo <= hi <= 1.0):
            raise InputError(f"need 0 <= p_L <= p_U <= 1, got ({lo}, {hi})")
        object.__setattr__(self, "p_L", lo)
        object.__setattr__(self, "p_U", hi)


@dataclass(frozen=True)
class MultinomialBounds:
    lower: Tuple[float, ...] = ()
    regret_gaps: Tuple[float, ...] = ()

    def __post_init__(self):
        lower = tuple(float(x) for x in self.lower)
        gaps = tuple(float(x) for x in self.regret_gaps)
        if any(not 0.0 <= x <= 1.0 for x in lower):
            raise InputError(f"lower probabilities must lie in [0, 1], got {lower}")
        if lower and sum(lower) > 1.0 + 1e-9:
            raise InputError(f"lower probabilities sum to {sum(lower)} > 1")
        if any(not 0.0 <= x <= 1.0 for x in gaps):
            raise InputError(f"regret gaps must lie in [0, 1], got {gaps}")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "regret_gaps", gaps)


@dataclass(frozen=True)
class Decision:
    discrete: Optional[int] = None
    continuous: Optional[float] = None
    tie: bool = False
    tie_set: Tuple[int, ...] = field(default=())

    def __post_init__(self):
        if (self.discrete is None) == (self.continuous is None):
            raise ValueError("exactly one of discrete/continuous must be set")

    @property
    def value(self):
        return self.discrete if self.discrete is not None else self.continuous


@dataclass(frozen=True)
class RiskReport:
    value: float
    criterion: str  # "risk" or "regret"


def _discrete(d, tie=False, tie_set=()):
    return Decision(discrete=int(d), tie=bool(tie), tie_set=tuple(int(i) for i in tie_set))


def _continuous(d):
    return Decision(continuous=float(d))


def _arg_extreme(values, largest: bool):
    """Smallest index attaining the max (or min), plus the near-tie set."""
    v = np.asarray(values, dtype=float)
    best = v.max() if largest else v.min()
    ties = np.flatnonzero(np.abs(v - best) < TIE_TOL)
    return int(ties[0]), tuple(int(i) for i in ties)


def theta_optimal(loss: LossSpec, p) -> Decision:
    """Forecast that minimizes expected loss when the forecast distribution is known."""
    if loss.kind == "classification":
        probs = np.asarray(p, dtype=float)
        if probs.ndim != 1 or len(probs) != loss.num_outcomes:
            raise InputError(f"expected {loss.num_outcomes} probabilities, got {probs.shape}")
        if np.any(probs < -SIMPLEX_TOL) or abs(probs.sum() - 1.0) > SIMPLEX_TOL:
            raise InputError(f"probability vector {probs.tolist()} is not on the simplex")
        d, ties = _arg_extreme(probs, largest=True)
        return _discrete(d, len(ties) > 1, ties)
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise InputError(f"probability {p} outside [0, 1]")
    if loss.kind == "binary":
        a = loss.threshold
        return _discrete(p >= a, abs(p - a) < TIE_TOL, (0, 1) if abs(p - a) < TIE_TOL else ())
    return _continuous(p)


def minimax_binary(loss: LossSpec, b: BinaryBounds) -> Tuple[Decision, RiskReport]:
    a01, a10 = loss.a01, loss.a10
    lhs = a01 * b.p_L + a10 * b.p_U
    tie = abs(lhs - a01) < TIE_TOL
    d = _discrete(a01 <= lhs, tie, (0, 1) if tie else ())
    risk = min(a01 * (1.0 - b.p_L), a10 * b.p_U)
    return d, RiskReport(risk, "risk")


def minimax_regret_binary(loss: LossSpec, b: BinaryBounds) -> Tuple[Decision, RiskReport]:
    a = loss.threshold
    regret_one = max(a - b.p_L, 0.0)
    regret_zero = max(b.p_U - a, 0.0)
    tie = abs(regret_one - regret_zero) < TIE_TOL
    d = _discrete(regret_one <= regret_zero, tie, (0, 1) if tie else ())
    scale = loss.a01 + loss.a10
    return d, RiskReport(scale * min(regret_one, regret_zero), "regret")


def minimax_quadratic(b: BinaryBounds) -> Decision:
    # 1/2 clamped to [p_L, p_U]
    return _continuous(min(max(0.5, b.p_L), b.p_U))


def minimax_quadratic_risk(b: BinaryBounds) -> RiskReport:
    d = minimax_quadratic(b).continuous
    return RiskReport(d * (1.0 - d), "risk")


def minimax_log(b: BinaryBounds) -> Decision:
    """Minimax forecast under log loss; coincides with the quadratic-loss rule.

    The degenerate endpoints are handled explicitly: forecasting 0 is only
    admissible when ``p_U = 0`` and forecasting 1 only when ``p_L = 1``.
    """
    if b.p_U == 0.0:
        return _continuous(0.0)
    if b.p_L == 1.0:
        return _continuous(1.0)
    return minimax_quadratic(b)


def mmr_quadratic(b: BinaryBounds) -> Tuple[Decision, RiskReport]:
    d = 0.5 * (b.p_L + b.p_U)
    return _continuous(d), RiskReport((0.5 * (b.p_U - b.p_L)) ** 2, "regret")


def bernoulli_entropy(p: float) -> float:
    """Entropy of Bernoulli(p) in nats, with 0 log 0 = 0."""
    out = 0.0
    if p > 0.0:
        out -= p * math.log(p)
    if p < 1.0:
        out -= (1.0 - p) * math.log1p(-p)
    return out


def bernoulli_kl(p: float, d: float) -> float:
    """KL divergence of Bernoulli(p) from Bernoulli(d)."""
    out = 0.0
    if p > 0.0:
        out += p * (math.log(p) - math.log(d)) if d > 0.0 else math.inf
    if p < 1.0:
        out += (1.0 - p) * (math.log1p(-p) - math.log1p(-d)) if d < 1.0 else math.inf
    return out


def mmr_log_logit(b: BinaryBounds) -> float:
    """Log-odds of the minimax-regret log-loss forecast (finite when p_L < p_U).

    Setting ``KL(p_L || d) = KL(p_U || d)`` and collecting terms gives
    ``logit(d) = (h(p_L) - h(p_U)) / (p_U - p_L)`` with ``h`` the entropy.
    """
    if b.p_L == b.p_U:
        raise InputError("log-odds form undefined for point-identified bounds")
    return (bernoulli_entropy(b.p_L) - bernoulli_entropy(b.p_U)) / (b.p_U - b.p_L)


def mmr_log(b: BinaryBounds) -> Decision:
    if b.p_L == b.p_U:
        return _continuous(b.p_L)
    z = mmr_log_logit(b)
    d = 1.0 / (1.0 + math.exp(-z)) if z >= 0 else math.exp(z) / (1.0 + math.exp(z))
    # the exact solution is inside [p_L, p_U]; guard against rounding at the ends
    return _continuous(min(max(d, b.p_L), b.p_U))


def mmr_log_regret(b: BinaryBounds) -> RiskReport:
    d = mmr_log(b).continuous
    return RiskReport(max(bernoulli_kl(b.p_L, d), bernoulli_kl(b.p_U, d)), "regret")


def minimax_classification(mb: MultinomialBounds) -> Tuple[Decision, RiskReport]:
    if not mb.lower:
        raise InputError("minimax classification needs lower probabilities")
    d, ties = _arg_extreme(mb.lower, largest=True)
    return _discrete(d, len(ties) > 1, ties), RiskReport(1.0 - max(mb.lower), "risk")


def mmr_classification(mb: MultinomialBounds) -> Tuple[Decision, RiskReport]:
    if not mb.regret_gaps:
        raise InputError("minimax-regret classification needs regret gaps")
    d, ties = _arg_extreme(mb.regret_gaps, largest=False)
    return _discrete(d, len(ties) > 1, ties), RiskReport(min(mb.regret_gaps), "regret")


def robust_forecasts(loss: LossSpec, bounds) -> dict:
    """All known-set robust forecasts for ``loss``, keyed by criterion."""
    if loss.kind == "classification":
        mm, mm_risk = minimax_classification(bounds) if bounds.lower else (None, None)
        mmr, mmr_risk = mmr_classification(bounds) if bounds.regret_gaps else (None, None)
        return {"minimax": (mm, mm_risk), "minimax_regret": (mmr, mmr_risk)}
    if loss.kind == "binary":
        return {"minimax": minimax_binary(loss, bounds), "minimax_regret": minimax_regret_binary(loss, bounds)}
    if loss.kind == "quadratic":
        return {"minimax": (minimax_quadratic(bounds), minimax_quadratic_risk(bounds)),
                "minimax_regret": mmr_quadratic(bounds)}
    d = minimax_log(bounds)
    risk = _log_minimax_risk(bounds, d.continuous)
    return {"minimax": (d, risk), "minimax_regret": (mmr_log(bounds), mmr_log_regret(bounds))}


def _log_minimax_risk(b: BinaryBounds, d: float) -> RiskReport:
    def loss_at(p):
        out = 0.0
        if p > 0.0:
            out -= p * math.log(d) if d > 0.0 else -math.inf
        if p < 1.0:
            out -= (1.0 - p) * math.log1p(-d) if d < 1.0 else -math.inf
        return out

    return RiskReport(max(loss_at(b.p_L), loss_at(b.p_U)), "risk")

