"""Shifted-normal limit experiment with a kinked upper probability.

The reduced form is a scalar ``P`` with ``p_L(P) = P`` and ``p_U(P)`` equal to
1/2 below 1/2 and ``min(2P - 1/2, 1)`` above.  Under binary loss with equal
weights, locally around ``P0 = 1/2`` the estimate ``hhat ~ N(h0, 1)`` and the
posterior ``h | hhat ~ N(hhat, 1)``.  Every rule compared here predicts 1 on
a half-line ``[t, inf)`` in ``hhat``, so its frequentist excess maximum risk
and regret have closed forms in ``Phi(t - h0)``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Sequence, Tuple

import numpy as np
from scipy.special import ndtr

from .decision_rules import BinaryBounds
from .errors import InputError

RULES = ("plugin", "bayes_mm", "bayes_mmr", "posterior_mean_plugin")
ROOT_TOL = 1e-12
BRACKET = (-10.0, 10.0)
MC_CHECK_POINTS = (-3.0, -1.0, -0.3, 0.0, 0.3, 1.0, 3.0)


def _pdf(x):
    return np.exp(-0.5 * np.square(x)) / math.sqrt(2.0 * math.pi)


def ex7_bounds(P: float) -> BinaryBounds:
    if not 0.0 < P < 1.0:
        raise InputError(f"P must lie in (0, 1), got {P}")
    upper = 0.5 if P < 0.5 else min(2.0 * P - 0.5, 1.0)
    return BinaryBounds(P, upper)


def positive_part_mean(hhat):
    """``E[(h)_+]`` for ``h ~ N(hhat, 1)``."""
    return hhat * ndtr(hhat) + _pdf(hhat)


def negative_part_mean(hhat):
    """``E[(-h)_+]`` for ``h ~ N(hhat, 1)``."""
    return -hhat * ndtr(-hhat) + _pdf(hhat)


# Each score is positive exactly where the rule predicts 1 (ties predict 1).
# Scores are the local (sqrt(n)-scaled) versions of the rules' defining inequalities.
SCORES: Dict[str, Callable] = {
    # p_L + p_U - 1 at the point estimate
    "plugin": lambda h: h + 2.0 * np.maximum(h, 0.0),
    # posterior mean of p_L + p_U - 1
    "bayes_mm": lambda h: h * (1.0 + 2.0 * ndtr(h)) + 2.0 * _pdf(h),
    # posterior mean of (p_U - 1/2)_+ minus posterior mean of (1/2 - p_L)_+
    "bayes_mmr": lambda h: 2.0 * positive_part_mean(h) - negative_part_mean(h),
    # the oracle regret rule evaluated at the posterior means of p_L and p_U
    "posterior_mean_plugin": lambda h: 2.0 * positive_part_mean(h) - np.maximum(-h, 0.0),
}


def ex7_rules(hhat: float) -> Dict[str, int]:
    return {name: int(score(hhat) >= 0.0) for name, score in SCORES.items()}


def rule_threshold(rule: str) -> float:
    """The point ``t`` with ``{hhat : d = 1} = [t, inf)``, by bisection.

    Raises when the score does not change sign exactly once on a scan of the
    bracket, since the closed-form curves then no longer apply.
    """
    if rule not in SCORES:
        raise InputError(f"unknown rule {rule!r}; expected one of {RULES}")
    score = SCORES[rule]
    scan = np.linspace(*BRACKET, 20001)
    signs = score(scan) >= 0.0
    if signs[0] or not signs[-1] or np.count_nonzero(np.diff(signs.astype(int))) != 1:
        raise InputError(f"rule {rule!r} is not a threshold rule on {BRACKET}")
    lo, hi = BRACKET
    while hi - lo > ROOT_TOL:
        mid = 0.5 * (lo + hi)
        if score(mid) >= 0.0:
            hi = mid
        else:
            lo = mid
    return hi


@dataclass
class Ex7Config:
    h0_min: float = -8.0
    h0_max: float = 8.0
    step: float = 0.01
    rules: Tuple[str, ...] = RULES

    def __post_init__(self):
        if self.step <= 0:
            raise InputError("step must be positive")
        if not math.isclose(self.h0_min, -self.h0_max):
            raise InputError("h0 grid must be symmetric about 0")
        bad = set(self.rules) - set(RULES)
        if bad:
            raise InputError(f"unknown rules {sorted(bad)}")

    @property
    def h0_grid(self) -> np.ndarray:
        n = int(round(self.h0_max / self.step))
        return np.round(np.arange(-n, n + 1) * self.step, 12)


@dataclass
class RuleCurve:
    rule: str
    threshold: float
    h0: np.ndarray
    excess: np.ndarray
    integrated: float = field(init=False)
    max_value: float = field(init=False)
    argmax: float = field(init=False)

    def __post_init__(self):
        self.integrated = float(np.trapezoid(self.excess, self.h0))
        i = int(np.argmax(self.excess))
        self.max_value, self.argmax = float(self.excess[i]), float(self.h0[i])


def excess_risk(threshold: float, h0):
    """Excess maximum risk: ``3 h0 P[d=0]`` for ``h0 >= 0``, ``-h0 P[d=1]`` below."""
    h0 = np.asarray(h0, dtype=float)
    p0 = ndtr(threshold - h0)
    return np.where(h0 >= 0, 3.0 * h0 * p0, -h0 * (1.0 - p0))


def excess_regret(threshold: float, h0):
    """Excess maximum regret: ``4 h0 P[d=0]`` for ``h0 >= 0``, ``-2 h0 P[d=1]`` below."""
    h0 = np.asarray(h0, dtype=float)
    p0 = ndtr(threshold - h0)
    return np.where(h0 >= 0, 4.0 * h0 * p0, -2.0 * h0 * (1.0 - p0))


def ex7_excess_risk_curve(cfg: Ex7Config) -> Dict[str, RuleCurve]:
    h0 = cfg.h0_grid
    return {r: RuleCurve(r, t, h0, excess_risk(t, h0)) for r, t in ((r, rule_threshold(r)) for r in cfg.rules)}


def ex7_excess_regret_curve(cfg: Ex7Config) -> Dict[str, RuleCurve]:
    h0 = cfg.h0_grid
    return {r: RuleCurve(r, t, h0, excess_regret(t, h0)) for r, t in ((r, rule_threshold(r)) for r in cfg.rules)}


def _per_draw_excess(d, h0: float, criterion: str):
    """Exact excess of decisions ``d`` at the local parameter ``h0``."""
    if criterion == "risk":
        return np.where(d == 0, 3.0 * h0, 0.0) if h0 >= 0 else np.where(d == 1, -h0, 0.0)
    if criterion == "regret":
        return np.where(d == 0, 4.0 * h0, 0.0) if h0 >= 0 else np.where(d == 1, -2.0 * h0, 0.0)
    raise InputError(f"criterion must be 'risk' or 'regret', got {criterion!r}")


def ex7_monte_carlo(rule: str, h0: float, reps: int, seed: int, criterion: str = "risk") -> Tuple[float, float]:
    """Simulated excess ``(mean, standard error)`` applying the rule's score to ``hhat ~ N(h0, 1)``."""
    if reps < 1:
        raise InputError("reps must be at least 1")
    if rule not in SCORES:
        raise InputError(f"unknown rule {rule!r}")
    hhat = h0 + np.random.default_rng(seed).standard_normal(reps)
    d = (SCORES[rule](hhat) >= 0.0).astype(int)
    x = _per_draw_excess(d, h0, criterion)
    se = float(x.std(ddof=1) / math.sqrt(reps)) if reps > 1 else 0.0
    return float(x.mean()), se


def ratio_table(curves: Dict[str, RuleCurve]) -> Dict[str, Dict[str, float]]:
    """Pairwise ``competitor / rule - 1`` for integrated and maximum excess.

    Entry ``[a][b]`` is how much larger rule ``b``'s value is than rule ``a``'s.
    """
    out = {}
    for a, ca in curves.items():
        out[a] = {}
        for b, cb in curves.items():
            if a == b:
                continue
            out[a][b] = {
                "integrated": cb.integrated / ca.integrated - 1.0 if ca.integrated > 0 else math.inf,
                "max": cb.max_value / ca.max_value - 1.0 if ca.max_value > 0 else math.inf,
            }
    return out


def write_curves_csv(curves: Dict[str, RuleCurve], path) -> None:
    names = list(curves)
    h0 = curves[names[0]].h0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["h0", *names])
        for i, h in enumerate(h0):
            w.writerow([f"{h:.6f}", *(f"{curves[n].excess[i]:.6f}" for n in names)])


def summary(curves: Dict[str, RuleCurve]) -> Dict[str, dict]:
    return {r: {"threshold": c.threshold, "integrated": c.integrated, "max": c.max_value, "argmax_h0": c.argmax}
            for r, c in curves.items()}
