"""Bayesian robust forecasts: average worst-case losses over draws of P.

Given draws ``P^(s)`` of the reduced-form parameter, each draw's identified
set yields bounds ``(p_L, p_U)`` (or the multinomial statistics), and the rules
here minimize the draw-averaged maximum risk or regret.  Averages are taken
over the per-draw objective, never over the bounds first, so the clipped
regret terms are averaged after clipping.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .decision_rules import (
    TIE_TOL, BinaryBounds, Decision, LossSpec, MultinomialBounds, _arg_extreme, _continuous, _discrete,
    minimax_log, minimax_quadratic, mmr_log, mmr_quadratic,
)
from .errors import EmptyIdentifiedSet, InputError
from .panel_dbc import HistoryDistribution

SOURCES = ("dirichlet_flat", "dirichlet_custom", "bootstrap")
SKIP_WARN_FRACTION = 0.10
GOLDEN_TOL = 1e-10


@dataclass
class PosteriorDraws:
    draws: np.ndarray  # S x K, rows on the simplex
    source: str
    seed: int
    alpha: Optional[np.ndarray] = None

    def __post_init__(self):
        self.draws = np.atleast_2d(np.asarray(self.draws, dtype=float))
        if self.draws.shape[0] < 1:
            raise InputError("need at least one draw")
        if np.any(self.draws < 0) or np.max(np.abs(self.draws.sum(axis=1) - 1.0)) > 1e-12:
            raise InputError("every draw must lie on the simplex")

    @property
    def S(self) -> int:
        return self.draws.shape[0]


def draw_posterior(h: HistoryDistribution, S: int, seed: int, source: str = "dirichlet_flat",
                   alpha=None) -> PosteriorDraws:
    """Draws of P from a Dirichlet posterior or from the bootstrap of the counts."""
    if h.counts is None:
        raise InputError("posterior draws need observed counts")
    if S < 1:
        raise InputError(f"S must be at least 1, got {S}")
    if source not in SOURCES:
        raise InputError(f"unknown source {source!r}; expected one of {SOURCES}")
    counts = h.counts.astype(float)
    rng = np.random.default_rng(seed)
    prior = None
    if source == "bootstrap":
        n = int(counts.sum())
        if n == 0:
            raise InputError("bootstrap needs at least one observation")
        draws = rng.multinomial(n, counts / n, size=S) / n
    else:
        if source == "dirichlet_custom":
            if alpha is None:
                raise InputError("dirichlet_custom needs alpha")
            prior = np.asarray(alpha, dtype=float).ravel()
            if prior.shape != counts.shape or np.any(prior <= 0):
                raise InputError("alpha must be positive with one entry per history")
        else:
            prior = np.ones_like(counts)
        draws = rng.dirichlet(prior + counts, size=S)
    draws = draws / draws.sum(axis=1, keepdims=True)
    return PosteriorDraws(draws, source, seed, prior)


@dataclass
class BoundsSample:
    bounds: List[object]
    kept: List[int] = field(default_factory=list)
    skipped: int = 0
    warning: Optional[str] = None

    def __len__(self):
        return len(self.bounds)

    def _require(self):
        if not self.bounds:
            raise EmptyIdentifiedSet(f"all {self.skipped} draws have an empty identified set")

    def binary_arrays(self):
        self._require()
        pl = np.array([b.p_L for b in self.bounds])
        pu = np.array([b.p_U for b in self.bounds])
        return pl, pu

    def multinomial_arrays(self):
        self._require()
        lower = np.array([b.lower for b in self.bounds])
        gaps = np.array([b.regret_gaps for b in self.bounds])
        return lower, gaps


def bounds_sample(draws: PosteriorDraws, bound_fn: Callable, cache: Optional[Dict[bytes, object]] = None) -> BoundsSample:
    """Evaluate ``bound_fn(P)`` per draw, skipping and counting empty identified sets.

    ``cache`` (keyed by the raw bytes of each draw) avoids recomputing bounds
    for repeated draws, which bootstrap samples produce often.
    """
    cache = {} if cache is None else cache
    out, kept, skipped = [], [], 0
    for s, P in enumerate(draws.draws):
        key = P.tobytes()
        if key not in cache:
            try:
                cache[key] = bound_fn(P)
            except EmptyIdentifiedSet:
                cache[key] = None
        if cache[key] is None:
            skipped += 1
            continue
        out.append(cache[key])
        kept.append(s)
    note = None
    if skipped > SKIP_WARN_FRACTION * draws.S:
        note = f"{skipped} of {draws.S} draws had an empty identified set and were skipped"
        warnings.warn(note)
    return BoundsSample(out, kept, skipped, note)


def from_bounds(bounds: Sequence[object]) -> BoundsSample:
    """Wrap precomputed per-draw bounds."""
    return BoundsSample(list(bounds), list(range(len(bounds))))


# ---------------------------------------------------------------------------
# binary rules


def bayes_minimax_binary(loss: LossSpec, bs: BoundsSample) -> Decision:
    pl, pu = bs.binary_arrays()
    avg = float(np.mean(loss.a01 * pl + loss.a10 * pu))
    tie = abs(avg - loss.a01) < TIE_TOL
    return _discrete(loss.a01 <= avg, tie, (0, 1) if tie else ())


def bayes_mmr_binary(loss: LossSpec, bs: BoundsSample) -> Decision:
    pl, pu = bs.binary_arrays()
    a = loss.threshold
    regret_one = float(np.mean(np.maximum(a - pl, 0.0)))
    regret_zero = float(np.mean(np.maximum(pu - a, 0.0)))
    tie = abs(regret_one - regret_zero) < TIE_TOL
    return _discrete(regret_one <= regret_zero, tie, (0, 1) if tie else ())


def _point_mass(pl, pu) -> bool:
    return bool(np.all(pl == pl[0]) and np.all(pu == pu[0]))


def bayes_minimax_quadratic(bs: BoundsSample) -> Decision:
    pl, pu = bs.binary_arrays()
    return minimax_quadratic(BinaryBounds(min(np.mean(pl), np.mean(pu)), np.mean(pu)))


def bayes_minimax_log(bs: BoundsSample) -> Decision:
    """Same forecast as under quadratic loss, with the log-loss endpoint convention."""
    pl, pu = bs.binary_arrays()
    return minimax_log(BinaryBounds(min(np.mean(pl), np.mean(pu)), np.mean(pu)))


def mmr_quadratic_objective(d, pl, pu):
    """Draw-averaged maximum quadratic regret at forecast(s) ``d``."""
    d = np.atleast_1d(np.asarray(d, dtype=float))[:, None]
    mid = 0.5 * (pl + pu)
    val = np.where(d < mid, (pu - d) ** 2, (pl - d) ** 2)
    return val.mean(axis=1)


def bayes_mmr_quadratic(bs: BoundsSample) -> Decision:
    """Exact minimizer of the piecewise-quadratic averaged regret.

    Between consecutive midpoints every draw uses a fixed endpoint, so the
    objective is one quadratic whose vertex is the mean of those endpoints.
    Candidates are the clipped vertices of all pieces plus the breakpoints.
    """
    pl, pu = bs.binary_arrays()
    if _point_mass(pl, pu):
        return mmr_quadratic(bs.bounds[0])[0]
    mids = np.sort(0.5 * (pl + pu))
    edges = np.r_[0.0, np.clip(mids, 0.0, 1.0), 1.0]
    candidates = [edges]
    for lo, hi in zip(edges[:-1], edges[1:]):
        if hi <= lo:
            continue
        probe = 0.5 * (lo + hi)
        target = np.where(probe < 0.5 * (pl + pu), pu, pl)
        candidates.append([min(max(target.mean(), lo), hi)])
    cand = np.unique(np.concatenate([np.atleast_1d(c) for c in candidates]))
    vals = mmr_quadratic_objective(cand, pl, pu)
    best = np.flatnonzero(vals <= vals.min() + 1e-15)
    return _continuous(float(cand[best[0]]))


def _kl_vec(p, d):
    """Elementwise Bernoulli KL(p || d) with 0 log 0 = 0."""
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = np.where(p > 0, p * (np.log(p) - np.log(d)), 0.0)
        t0 = np.where(p < 1, (1 - p) * (np.log1p(-p) - np.log1p(-d)), 0.0)
    return t1 + t0


def mmr_log_objective(d: float, pl, pu) -> float:
    if d <= 0.0 and np.any(pu > 0):
        return math.inf
    if d >= 1.0 and np.any(pl < 1):
        return math.inf
    return float(np.mean(np.maximum(_kl_vec(pl, d), _kl_vec(pu, d))))


def bayes_mmr_log(bs: BoundsSample) -> Decision:
    """Golden-section minimization of the averaged maximum KL regret over [0, 1]."""
    pl, pu = bs.binary_arrays()
    if np.all(pu == 0.0):
        return _continuous(0.0)
    if np.all(pl == 1.0):
        return _continuous(1.0)
    if _point_mass(pl, pu):
        return mmr_log(bs.bounds[0])
    f = lambda d: mmr_log_objective(d, pl, pu)
    # the minimizer lies in [min p_L, max p_U]; each draw's term is minimized there
    a, b = float(pl.min()), float(pu.max())
    g = (math.sqrt(5.0) - 1.0) / 2.0
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = f(c), f(d)
    while b - a > GOLDEN_TOL:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f(d)
    return _continuous(0.5 * (a + b))


# ---------------------------------------------------------------------------
# classification


def bayes_classification(bs: BoundsSample, criterion: str = "mm") -> Decision:
    lower, gaps = bs.multinomial_arrays()
    if criterion == "mm":
        d, ties = _arg_extreme(lower.mean(axis=0), largest=True)
    elif criterion == "mmr":
        d, ties = _arg_extreme(gaps.mean(axis=0), largest=False)
    else:
        raise InputError(f"criterion must be 'mm' or 'mmr', got {criterion!r}")
    return _discrete(d, len(ties) > 1, ties)


# ---------------------------------------------------------------------------
# reporting


def binary_rules(loss: LossSpec, bs: BoundsSample) -> Dict[str, Decision]:
    """The Bayesian robust forecasts that apply to ``loss``."""
    if loss.kind == "binary":
        return {"minimax": bayes_minimax_binary(loss, bs), "minimax_regret": bayes_mmr_binary(loss, bs)}
    if loss.kind == "quadratic":
        return {"minimax": bayes_minimax_quadratic(bs), "minimax_regret": bayes_mmr_quadratic(bs)}
    if loss.kind == "log":
        return {"minimax": bayes_minimax_log(bs), "minimax_regret": bayes_mmr_log(bs)}
    if loss.kind == "classification":
        return {"minimax": bayes_classification(bs, "mm"), "minimax_regret": bayes_classification(bs, "mmr")}
    raise InputError(f"unsupported loss {loss.kind!r}")


def all_binary_rules(bs: BoundsSample, a01: float = 1.0, a10: float = 1.0) -> Dict[str, Decision]:
    """All six binary-outcome rules keyed ``<loss>_<criterion>``."""
    out = {}
    for kind in ("binary", "quadratic", "log"):
        loss = LossSpec(kind, a01, a10)
        for crit, dec in binary_rules(loss, bs).items():
            out[f"{kind}_{crit}"] = dec
    return out


def report(rule: str, decision: Decision, bs: BoundsSample, draws: PosteriorDraws) -> dict:
    out = {"rule": rule, "decision": decision.value, "tie": decision.tie, "S": draws.S,
           "skipped": bs.skipped, "seed": draws.seed}
    if bs.bounds and isinstance(bs.bounds[0], BinaryBounds):
        pl, pu = bs.binary_arrays()
        out.update(mean_pL=float(pl.mean()), mean_pU=float(pu.mean()))
    elif bs.bounds:
        lower, gaps = bs.multinomial_arrays()
        out.update(mean_lower=lower.mean(axis=0).tolist(), mean_gaps=gaps.mean(axis=0).tolist())
    if bs.warning:
        out["warning"] = bs.warning
    return out
