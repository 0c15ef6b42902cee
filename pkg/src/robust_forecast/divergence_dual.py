"""Extreme probabilities over Kullback-Leibler neighbourhoods of a reference.

For a reference distribution ``Pi_phi`` and radius ``delta`` the upper
probability at ``phi`` is

    sup { E_Pi[b] : K(Pi || Pi_phi) <= delta, E_Pi[g] = r }
      = inf_{eta >= 0, mu}  eta * log E_ref[exp((b + mu'(g - r)) / eta)] + eta * delta.

The expectation is replaced by a weighted sample from the reference (Monte
Carlo, Gauss-Hermite nodes, or the support of a discrete reference).  The
``eta -> 0`` end of the dual is the essential supremum of ``b + mu'(g - r)``
minimized over ``mu``, a linear program that is solved separately.  The lower
probability is ``-upper(-b)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple, Union

import numpy as np
from scipy.optimize import linprog, minimize
from scipy.special import logsumexp

from .errors import EmptyIdentifiedSet, InputError, NumericalFailure

ETA_MIN = 1e-8
GRAD_TOL = 1e-6
INFEASIBLE_TOL = 1e-6
PINSKER_TOL = 1e-8
DIVERGENCE_RTOL = 1e-6


# ---------------------------------------------------------------------------
# references


@dataclass(frozen=True)
class NormalReference:
    """Univariate normal; Monte Carlo draws or Gauss-Hermite nodes."""

    mean: float = 0.0
    sd: float = 1.0
    method: str = "mc"
    nodes: int = 64

    def points(self, n: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
        if self.method == "gauss_hermite":
            x, w = np.polynomial.hermite_e.hermegauss(self.nodes)
            return self.mean + self.sd * x, w / w.sum()
        if self.method != "mc":
            raise InputError(f"unknown normal reference method {self.method!r}")
        return self.mean + self.sd * rng.standard_normal(n), np.full(n, 1.0 / n)

    @property
    def exact(self) -> bool:
        return self.method == "gauss_hermite"


@dataclass(frozen=True)
class NormalMixtureReference:
    weights: Tuple[float, ...]
    means: Tuple[float, ...]
    sds: Tuple[float, ...]

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if not (len(self.weights) == len(self.means) == len(self.sds)) or np.any(w < 0) or abs(w.sum() - 1) > 1e-12:
            raise InputError("mixture needs matching weights/means/sds with weights on the simplex")

    def points(self, n: int, rng: np.random.Generator):
        comp = rng.choice(len(self.weights), size=n, p=np.asarray(self.weights))
        x = np.asarray(self.means)[comp] + np.asarray(self.sds)[comp] * rng.standard_normal(n)
        return x, np.full(n, 1.0 / n)

    exact = False


@dataclass(frozen=True)
class DiscreteReference:
    support: Tuple[float, ...]
    probs: Tuple[float, ...]

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if len(self.support) != len(self.probs) or np.any(p < 0) or abs(p.sum() - 1) > 1e-12:
            raise InputError("discrete reference needs one probability per support point, summing to 1")

    def points(self, n: int, rng: np.random.Generator):
        return np.asarray(self.support, dtype=float), np.asarray(self.probs, dtype=float)

    exact = True


Reference = Union[NormalReference, NormalMixtureReference, DiscreteReference]


# ---------------------------------------------------------------------------
# specification


@dataclass
class ContinuousSetSpec:
    """KL-neighbourhood set with moment restrictions ``E_Pi[g(X; phi)] = r``.

    ``reference`` is a reference object or a callable ``phi -> reference``.
    ``b(x, phi, m)`` and ``g(x, phi)`` are vectorized over the points ``x``;
    ``g`` returns an ``(n, K)`` array.  ``delta = inf`` selects the
    unrestricted-support limit, which keeps only the essential-supremum branch.
    """

    phi_grid: np.ndarray
    reference: Union[Reference, Callable]
    b: Callable
    g: Optional[Callable] = None
    r: np.ndarray = field(default_factory=lambda: np.zeros(0))
    delta: float = 0.0
    sample_size: int = 100_000
    seed: int = 0
    num_outcomes: int = 2
    b_bound: float = 1.0

    def __post_init__(self):
        grid = np.asarray(self.phi_grid, dtype=float)
        self.phi_grid = grid.reshape(1) if grid.ndim == 0 else grid
        self.r = np.asarray(self.r, dtype=float).ravel()
        if isinstance(self.delta, str):
            if self.delta != "large":
                raise InputError(f"delta must be a number or 'large', got {self.delta!r}")
            self.delta = math.inf
        self.delta = float(self.delta)
        if not self.delta >= 0:
            raise InputError(f"delta must be nonnegative, got {self.delta}")
        if self.sample_size < 1:
            raise InputError("sample_size must be positive")
        if self.r.size and self.g is None:
            raise InputError("moment target r given without moment function g")

    def reference_at(self, phi) -> Reference:
        return self.reference(phi) if callable(self.reference) and not hasattr(self.reference, "points") else self.reference

    def sample(self, index: int, phi):
        """Weighted reference points for grid position ``index``; fixed by the seed."""
        rng = np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(index,)))
        return self.reference_at(phi).points(self.sample_size, rng)

    def moments(self, x, phi) -> np.ndarray:
        if self.g is None or self.r.size == 0:
            return np.zeros((np.size(x), 0))
        gx = np.asarray(self.g(x, phi), dtype=float).reshape(np.size(x), -1)
        if gx.shape[1] != self.r.size:
            raise InputError(f"g returned {gx.shape[1]} moments; r has {self.r.size}")
        return gx - self.r


@dataclass
class InnerSolution:
    value: float
    eta: float
    mu: np.ndarray
    std_error: float
    feasible: bool = True
    branch: str = "smooth"  # smooth | ess_sup


@dataclass
class KLBound:
    value: float
    phi: object
    std_error: float
    n_feasible: int
    inner: InnerSolution


# ---------------------------------------------------------------------------
# inner problem


def _centred_lse(z, w, eta):
    """``(zbar, L, s)`` with ``eta * log E_w exp(z / eta) = zbar + eta * L``.

    ``zbar`` is the weighted mean of ``z`` and ``s`` the tilted weights.  For
    large ``eta`` the tilt is tiny; writing ``L = log1p(E expm1(c))`` with
    centred ``c = (z - zbar) / eta`` keeps its relative precision, where the
    plain log-sum-exp would lose it to cancellation against ``zbar``.
    """
    zbar = float(w @ z)
    c = (z - zbar) / eta
    if c.max() <= 1.0:
        e = np.expm1(c)
        S = float(w @ e)
        L = math.log1p(S)
        s = w * (1.0 + e) / (1.0 + S)
    else:
        L = float(logsumexp(c, b=w))
        s = w * np.exp(c - L)
    return zbar, L, c, s


def dual_objective(eta: float, mu, z0, dg, w, delta: float) -> float:
    """``eta * log sum_i w_i exp((z0_i + dg_i @ mu) / eta) + eta * delta``."""
    zbar, L, _, _ = _centred_lse(z0 + dg @ np.asarray(mu, dtype=float), w, eta)
    return zbar + eta * L + eta * delta


def _smooth_part(params, z0, dg, w, delta):
    rho, mu = params[0], params[1:]
    eta = math.exp(rho)
    zbar, L, c, s = _centred_lse(z0 + dg @ mu, w, eta)
    value = zbar + eta * L + eta * delta
    d_eta = L - s @ c + delta
    grad = np.r_[eta * d_eta, dg.T @ s]
    return value, grad


def _ess_sup(z0, dg, w) -> Tuple[float, np.ndarray]:
    """``min_mu max_{i: w_i > 0} z0_i + dg_i @ mu``; ``-inf`` when unbounded below."""
    keep = w > 0
    z0, dg = z0[keep], dg[keep]
    K = dg.shape[1]
    if K == 0:
        return float(z0.max()), np.zeros(0)
    # variables (mu, t): minimize t s.t. z0 + dg mu <= t
    res = linprog(np.r_[np.zeros(K), 1.0], A_ub=np.hstack([dg, -np.ones((dg.shape[0], 1))]), b_ub=-z0,
                  bounds=[(None, None)] * (K + 1), method="highs")
    if res.status == 3:
        return -math.inf, np.zeros(K)
    if res.status != 0:
        raise NumericalFailure(f"essential-supremum LP failed: {res.message}")
    return float(res.fun), res.x[:K]


def _lse_part(nu, dg, w):
    zbar, L, _, s = _centred_lse(dg @ nu, w, 1.0)
    return zbar + L, dg.T @ s


def moment_divergence(dg, w) -> float:
    """``min KL(Pi || reference)`` over ``Pi`` meeting the moments ``E_Pi[g - r] = 0``.

    Computed from its dual ``-min_nu log E exp(nu'(g - r))``, which is convex
    and does not involve ``eta``.
    """
    K = dg.shape[1]
    res = minimize(_lse_part, np.zeros(K), args=(dg, w), jac=True, method="L-BFGS-B",
                   options={"maxiter": 2000, "gtol": 1e-12, "ftol": 1e-16})
    return max(-float(res.fun), 0.0)


def inner_upper(z0, dg, w, delta: float, exact: bool = False) -> InnerSolution:
    """``inf_{eta, mu}`` of the dual objective for objective values ``z0``.

    ``dg`` holds the centred moments ``g - r`` at the points, ``w`` their
    weights.  The result is flagged infeasible (value ``-inf``) when the
    moment condition cannot be met inside the neighbourhood.
    """
    z0 = np.asarray(z0, dtype=float)
    dg = np.asarray(dg, dtype=float).reshape(z0.size, -1)
    w = np.asarray(w, dtype=float)
    K = dg.shape[1]
    lo_b = float(z0[w > 0].min())

    ess_value, ess_mu = _ess_sup(z0, dg, w)
    if ess_value == -math.inf:
        return InnerSolution(-math.inf, 0.0, ess_mu, 0.0, feasible=False, branch="ess_sup")
    if math.isinf(delta):
        return InnerSolution(ess_value, 0.0, ess_mu, 0.0, branch="ess_sup")
    # Pinsker: every Pi in the ball moves each expectation by at most its range times
    # sqrt(delta / 2).  For radii where that is below PINSKER_TOL the reference mean is
    # the answer to that accuracy; the dual would need eta of order 1 / sqrt(delta),
    # where log-sum-exp has no precision left.  A moment the reference misses by more
    # than the same bound cannot be met anywhere in the ball.
    reach = math.sqrt(0.5 * delta)
    span = float(z0[w > 0].max() - lo_b)
    if delta == 0.0 or span * reach <= PINSKER_TOL:
        if K:
            live = dg[w > 0]
            miss = np.abs(w @ dg)
            if np.any(miss > (live.max(axis=0) - live.min(axis=0)) * reach + 1e-12):
                return InnerSolution(-math.inf, math.inf, np.zeros(K), 0.0, feasible=False)
        mean = float(w @ z0)
        se = 0.0 if exact else float(np.sqrt(w @ (z0 - mean) ** 2 / max(z0.size - 1, 1)))
        return InnerSolution(mean, math.inf, np.zeros(K), se)

    if K and moment_divergence(dg, w) > delta * (1.0 + DIVERGENCE_RTOL):
        # the moment set lies outside the ball; the dual decreases without bound as eta grows
        return InnerSolution(-math.inf, math.inf, np.zeros(K), 0.0, feasible=False)

    x0 = np.r_[0.0, np.zeros(K)]
    bounds = [(math.log(ETA_MIN), 30.0)] + [(None, None)] * K
    res = minimize(_smooth_part, x0, args=(z0, dg, w, delta), jac=True, method="L-BFGS-B",
                   bounds=bounds, options={"maxiter": 2000, "gtol": 1e-10, "ftol": 1e-15})
    value, grad = _smooth_part(res.x, z0, dg, w, delta)
    eta, mu = math.exp(res.x[0]), res.x[1:]

    if value < lo_b - INFEASIBLE_TOL:
        # the dual is unbounded below along the optimizer path
        return InnerSolution(-math.inf, eta, mu, 0.0, feasible=False)
    if ess_value <= value:
        return InnerSolution(ess_value, 0.0, ess_mu, 0.0, branch="ess_sup")

    projected = grad.copy()
    if res.x[0] <= bounds[0][0] + 1e-12:
        projected[0] = min(projected[0], 0.0)
    if res.x[0] >= bounds[0][1] - 1e-12:
        projected[0] = max(projected[0], 0.0)
    if np.linalg.norm(projected, np.inf) > GRAD_TOL:
        raise NumericalFailure(
            f"KL dual did not converge: gradient norm {np.linalg.norm(projected, np.inf):.3g}, "
            f"eta={eta:.4g}, mu={mu}, optimizer message: {res.message}")
    return InnerSolution(value, eta, mu, 0.0 if exact else _std_error(z0, dg, w, eta, mu))


def _std_error(z0, dg, w, eta, mu) -> float:
    """Delta-method standard error of the plug-in dual value at the optimum."""
    a = (z0 + dg @ mu) / eta
    e = np.exp(a - a.max())
    mean = w @ e
    var = w @ (e - mean) ** 2
    return float(eta * math.sqrt(var / max(z0.size - 1, 1)) / mean)


# ---------------------------------------------------------------------------
# outer problem


def _scan(spec: ContinuousSetSpec, objective: Callable, sign: float) -> KLBound:
    best: Optional[KLBound] = None
    n_feasible = 0
    for i, phi in enumerate(spec.phi_grid):
        x, w = spec.sample(i, phi)
        z0 = sign * np.asarray(objective(x, phi), dtype=float)
        if np.max(np.abs(z0)) > 2.0 * spec.b_bound + 1e-12:
            raise InputError(f"objective exceeds the declared bound {spec.b_bound} at phi={phi}")
        exact = getattr(spec.reference_at(phi), "exact", False)
        sol = inner_upper(z0, spec.moments(x, phi), w, spec.delta, exact)
        if not sol.feasible:
            continue
        n_feasible += 1
        if best is None or sol.value > best.value:
            best = KLBound(sol.value, phi, sol.std_error, 0, sol)
    if best is None:
        raise EmptyIdentifiedSet("no phi on the grid admits a distribution in the neighbourhood meeting the moments")
    best.n_feasible = n_feasible
    return best


def _clamp_unit(value: float) -> float:
    return min(max(value, 0.0), 1.0)


def dual_extreme_upper_report(spec: ContinuousSetSpec, outcome: int = 1) -> KLBound:
    return _scan(spec, lambda x, phi: spec.b(x, phi, outcome), 1.0)


def dual_extreme_lower_report(spec: ContinuousSetSpec, outcome: int = 1) -> KLBound:
    out = _scan(spec, lambda x, phi: spec.b(x, phi, outcome), -1.0)
    out.value = -out.value
    return out


def dual_extreme_upper(spec: ContinuousSetSpec, outcome: int = 1) -> float:
    return _clamp_unit(dual_extreme_upper_report(spec, outcome).value)


def dual_extreme_lower(spec: ContinuousSetSpec, outcome: int = 1) -> float:
    return _clamp_unit(dual_extreme_lower_report(spec, outcome).value)


def multinomial_regret_gap(spec: ContinuousSetSpec, m: int) -> float:
    """Worst-case regret of forecasting ``m``: largest upper value of ``b_m' - b_m``."""
    if not 0 <= m < spec.num_outcomes:
        raise InputError(f"outcome {m} outside 0..{spec.num_outcomes - 1}")
    best = 0.0
    for other in range(spec.num_outcomes):
        if other == m:
            continue
        rep = _scan(spec, lambda x, phi, o=other: spec.b(x, phi, o) - spec.b(x, phi, m), 1.0)
        best = max(best, rep.value)
    return min(best, 1.0)
