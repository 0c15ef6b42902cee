"""Dynamic binary choice panels with discrete random effects.

The model is ``P(Y_t = 1 | Y_{t-1}, lambda) = F(beta * Y_{t-1} + lambda)`` with
``F`` the probit or logit link and an unrestricted joint distribution of the
initial condition ``Y_0`` and the effect ``lambda`` on a fixed support.
Histories ``y^T`` are indexed lexicographically with ``y_1`` most
significant, so index ``k`` has binary digits ``y_1 ... y_T``.
"""
from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit, ndtr

from .errors import InputError
from .linear_model import LinearSetSpec

LINKS = ("probit", "logit")
FORECAST_MODES = ("marginal", "conditional")
HT_BETA0 = 0.2
HT_LAMBDA_GRID = np.round(np.arange(-15, 16) * 0.2, 10)


def link_cdf(x, link: str = "probit"):
    if link == "probit":
        return ndtr(x)
    if link == "logit":
        return expit(x)
    raise InputError(f"unknown link {link!r}; expected one of {LINKS}")


def all_histories(T: int) -> np.ndarray:
    """All ``2**T`` binary histories, one per row, in lexicographic order."""
    return np.array(list(itertools.product((0, 1), repeat=T)), dtype=int).reshape(-1, T)


def history_index(history: Sequence[int]) -> int:
    k = 0
    for y in history:
        k = 2 * k + int(y)
    return k


@dataclass(frozen=True)
class PanelModelSpec:
    T: int
    lambda_grid: Tuple[float, ...]
    history: Tuple[int, ...]
    link: str = "probit"
    y0_support: Tuple[int, ...] = (0, 1)

    def __post_init__(self):
        grid = tuple(float(x) for x in self.lambda_grid)
        hist = tuple(int(y) for y in self.history)
        object.__setattr__(self, "lambda_grid", grid)
        object.__setattr__(self, "history", hist)
        object.__setattr__(self, "y0_support", tuple(int(y) for y in self.y0_support))
        if self.T < 1:
            raise InputError(f"T must be at least 1, got {self.T}")
        if not grid or np.any(np.diff(grid) <= 0):
            raise InputError("lambda_grid must be nonempty and strictly increasing")
        if len(hist) != self.T or any(y not in (0, 1) for y in hist):
            raise InputError(f"conditioning history must be a binary vector of length {self.T}, got {hist}")
        if self.link not in LINKS:
            raise InputError(f"unknown link {self.link!r}; expected one of {LINKS}")
        if not self.y0_support or any(y not in (0, 1) for y in self.y0_support):
            raise InputError("y0_support must be a nonempty subset of {0, 1}")

    def support(self) -> Tuple[np.ndarray, np.ndarray]:
        """``(y0, lambda)`` of each support point: every lambda with y0=0, then y0=1."""
        lam = np.asarray(self.lambda_grid)
        y0 = np.repeat(self.y0_support, lam.size)
        return y0, np.tile(lam, len(self.y0_support))


@dataclass
class HistoryDistribution:
    probs: np.ndarray
    counts: Optional[np.ndarray] = None

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=float).ravel()
        n = self.probs.size
        if n < 2 or n & (n - 1):
            raise InputError(f"need 2**T history probabilities, got {n}")
        if np.any(self.probs < 0) or abs(self.probs.sum() - 1.0) > 1e-12:
            raise InputError("history probabilities must be nonnegative and sum to 1")
        if self.counts is not None:
            self.counts = np.asarray(self.counts, dtype=int).ravel()
            if self.counts.size != n or np.any(self.counts < 0):
                raise InputError("counts must be nonnegative with one entry per history")

    @property
    def T(self) -> int:
        return int(self.probs.size).bit_length() - 1

    @classmethod
    def from_counts(cls, counts) -> "HistoryDistribution":
        counts = np.asarray(counts, dtype=int)
        total = counts.sum()
        if total <= 0:
            raise InputError("counts are all zero")
        return cls(counts / total, counts)


@dataclass
class DgpSpec:
    beta0: float
    lambda_grid: np.ndarray
    lambda_weights: np.ndarray
    y0_prob: float = 0.5
    independent: bool = True
    link: str = "probit"

    def __post_init__(self):
        self.lambda_grid = np.asarray(self.lambda_grid, dtype=float)
        self.lambda_weights = np.asarray(self.lambda_weights, dtype=float)
        if self.lambda_weights.shape != self.lambda_grid.shape:
            raise InputError("lambda_weights must match lambda_grid")
        if np.any(self.lambda_weights < 0) or abs(self.lambda_weights.sum() - 1.0) > 1e-12:
            raise InputError("lambda_weights must lie on the simplex")
        if not 0.0 <= self.y0_prob <= 1.0:
            raise InputError("y0_prob must be a probability")
        if not self.independent:
            raise InputError("only designs with lambda independent of Y0 are generated")

    def mixing_weights(self) -> np.ndarray:
        """Joint weights over the ``(y0, lambda)`` support in ``PanelModelSpec`` order."""
        return np.r_[(1.0 - self.y0_prob) * self.lambda_weights, self.y0_prob * self.lambda_weights]


def history_prob(history, y0: int, lam: float, beta: float, link: str = "probit") -> float:
    """Probability of the history ``y_1..y_T`` given ``y_0`` and ``lambda``."""
    prev, out = int(y0), 1.0
    for y in history:
        q = float(link_cdf(beta * prev + lam, link))
        out *= q if y == 1 else 1.0 - q
        prev = int(y)
    return out


def history_matrix(T: int, y0, lam, beta: float, link: str = "probit") -> np.ndarray:
    """``2**T x L`` matrix of history probabilities, one column per support point."""
    y0 = np.asarray(y0, dtype=float)
    lam = np.asarray(lam, dtype=float)
    hists = all_histories(T)
    out = np.ones((hists.shape[0], lam.size))
    prev = np.broadcast_to(y0, out.shape)
    for t in range(T):
        q = link_cdf(beta * prev + lam, link)
        y = hists[:, [t]]
        out *= np.where(y == 1, q, 1.0 - q)
        prev = np.broadcast_to(y.astype(float), out.shape)
    return out


def build_panel_spec(model: PanelModelSpec, P: HistoryDistribution, beta_grid,
                     forecast: str = "marginal", refine: bool = True) -> LinearSetSpec:
    """Linear set for the probability that ``Y_{T+1} = 1`` after ``model.history``.

    ``forecast="marginal"`` scores ``F(beta * y_T + lambda)`` against the
    mixing weights themselves.  ``forecast="conditional"`` reweights each
    support point by its likelihood of the conditioning history, giving the
    probability conditional on the whole observed history.
    """
    if P.T != model.T:
        raise InputError(f"history distribution has T={P.T}, model has T={model.T}")
    if forecast not in FORECAST_MODES:
        raise InputError(f"forecast mode must be one of {FORECAST_MODES}, got {forecast!r}")
    k = history_index(model.history)
    p_hist = P.probs[k]
    if p_hist <= 0:
        raise InputError(f"conditioning history {model.history} has zero probability")
    y0, lam = model.support()
    y_last = model.history[-1]

    def build_G(beta):
        return history_matrix(model.T, y0, lam, float(beta), model.link)

    def build_b(beta, m):
        q = link_cdf(float(beta) * y_last + lam, model.link)
        if forecast == "conditional":
            weight = history_matrix(model.T, y0, lam, float(beta), model.link)[k] / p_hist
        else:
            weight = np.ones_like(lam)
        if m == 1:
            return q * weight
        if m == 0:
            return (1.0 - q) * weight
        raise InputError(f"binary outcome index must be 0 or 1, got {m}")

    return LinearSetSpec(np.asarray(beta_grid, dtype=float), build_G, build_b, P.probs,
                         num_outcomes=2, history_model=True, refine=refine)


def normal_lambda_weights(grid, rule: str = "cell") -> np.ndarray:
    """Discretize N(0,1) on ``grid``.

    ``rule="cell"`` gives each point the normal mass of its cell, with cell
    edges at midpoints between neighbours and open outer cells.
    ``rule="density"`` normalizes the density values at the grid points.
    """
    grid = np.asarray(grid, dtype=float)
    if rule == "cell":
        edges = np.r_[-np.inf, 0.5 * (grid[:-1] + grid[1:]), np.inf]
        w = np.diff(ndtr(edges))
    elif rule == "density":
        w = np.exp(-0.5 * grid ** 2)
    else:
        raise InputError(f"unknown weight rule {rule!r}")
    return w / w.sum()


def population_history_probs(dgp: DgpSpec, T: int) -> HistoryDistribution:
    """Exact history distribution of the design by summation over the support."""
    y0 = np.repeat([0, 1], dgp.lambda_grid.size)
    lam = np.tile(dgp.lambda_grid, 2)
    probs = history_matrix(T, y0, lam, dgp.beta0, dgp.link) @ dgp.mixing_weights()
    return HistoryDistribution(probs / probs.sum())


def true_forecast_prob(dgp: DgpSpec, history, forecast: str = "marginal") -> float:
    """Forecast probability of ``Y_{T+1} = 1`` implied by the design itself."""
    history = tuple(int(y) for y in history)
    T = len(history)
    y0 = np.repeat([0, 1], dgp.lambda_grid.size)
    lam = np.tile(dgp.lambda_grid, 2)
    w = dgp.mixing_weights()
    q = link_cdf(dgp.beta0 * history[-1] + lam, dgp.link)
    if forecast == "marginal":
        return float(w @ q)
    like = history_matrix(T, y0, lam, dgp.beta0, dgp.link)[history_index(history)]
    return float((w * like) @ q / (w @ like))


def honore_tamer_dgp(T: int = 2, weight_rule: str = "cell") -> Tuple[DgpSpec, HistoryDistribution]:
    """Panel probit design with beta0 = 0.2 and a discretized normal effect."""
    dgp = DgpSpec(HT_BETA0, HT_LAMBDA_GRID.copy(), normal_lambda_weights(HT_LAMBDA_GRID, weight_rule), 0.5)
    return dgp, population_history_probs(dgp, T)


def simulate_panel(dgp: DgpSpec, T: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n x T`` array of simulated outcomes ``y_1..y_T``."""
    idx = rng.choice(dgp.lambda_grid.size, size=n, p=dgp.lambda_weights)
    lam = dgp.lambda_grid[idx]
    prev = (rng.random(n) < dgp.y0_prob).astype(float)
    out = np.empty((n, T), dtype=int)
    for t in range(T):
        prev = (rng.random(n) < link_cdf(dgp.beta0 * prev + lam, dgp.link)).astype(float)
        out[:, t] = prev
    return out


def tally_histories(panel: np.ndarray) -> HistoryDistribution:
    panel = np.asarray(panel, dtype=int)
    T = panel.shape[1]
    weights = 2 ** np.arange(T - 1, -1, -1)
    counts = np.bincount(panel @ weights, minlength=2 ** T)
    return HistoryDistribution.from_counts(counts)


def ingest_panel_csv(path) -> HistoryDistribution:
    """Tally a CSV of binary panels with header ``y1,...,yT``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise InputError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    T = len(header)
    if header != [f"y{t}" for t in range(1, T + 1)]:
        raise InputError(f"{path}: header must be y1..yT, got {header}")
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != T:
            raise InputError(f"{path}: line {lineno} has {len(row)} fields, expected {T}")
        values = []
        for col, cell in zip(header, row):
            cell = cell.strip()
            if cell not in ("0", "1"):
                raise InputError(f"{path}: line {lineno}, column {col}: value {cell!r} is not 0 or 1")
            values.append(int(cell))
        data.append(values)
    if not data:
        raise InputError(f"{path}: no data rows")
    return tally_histories(np.array(data))


def grid_from_range(spec: dict, what: str) -> np.ndarray:
    try:
        lo, hi, step = float(spec["min"]), float(spec["max"]), float(spec["step"])
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{what} needs numeric min, max and step") from exc
    if step <= 0 or hi < lo:
        raise InputError(f"{what}: need step > 0 and max >= min")
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return np.round(lo + step * np.arange(n), 10)


@dataclass
class PanelJobConfig:
    """Everything needed to compute panel forecast bounds, as read from JSON."""

    model: PanelModelSpec
    beta_grid: np.ndarray
    forecast: str = "marginal"
    extra: dict = field(default_factory=dict)


def load_model_spec(path) -> PanelJobConfig:
    """Read ``{T, lambda_grid:{min,max,step}, link, beta:{min,max,step}, history}``."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from exc
    return parse_model_spec(raw)


def parse_model_spec(raw: dict) -> PanelJobConfig:
    for key in ("T", "lambda_grid", "history"):
        if key not in raw:
            raise InputError(f"model spec is missing {key!r}")
    lam = grid_from_range(raw["lambda_grid"], "lambda_grid")
    beta = grid_from_range(raw.get("beta", {"min": -5.0, "max": 5.0, "step": 0.01}), "beta")
    model = PanelModelSpec(int(raw["T"]), tuple(lam), tuple(raw["history"]), raw.get("link", "probit"))
    forecast = raw.get("forecast", "marginal")
    if forecast not in FORECAST_MODES:
        raise InputError(f"forecast must be one of {FORECAST_MODES}")
    return PanelJobConfig(model, beta, forecast)
