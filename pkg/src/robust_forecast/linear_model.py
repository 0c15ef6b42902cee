"""Identified sets that are linear in a discrete mixing distribution.

A set is described by a grid of homogeneous parameters ``phi`` and, for each
``phi``, a moment matrix ``G(phi)`` (K x L), a target ``r`` and outcome weight
vectors ``b_m(phi)``.  The feasible mixing weights at ``phi`` are the points
``pi`` of the L-simplex with ``G(phi) @ pi = r``, and the forecast probability
of outcome ``m`` is ``b_m(phi) @ pi``.

Extreme probabilities are computed by an outer search over ``phi`` (grid plus
local refinement) around inner linear programs.  Every inner value is solved
twice, once in the primal simplex form and once in the dual form, and the two
must agree.
"""
from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .decision_rules import BinaryBounds, MultinomialBounds
from .errors import EmptyIdentifiedSet, InputError, NumericalFailure
from .lp_core import FEAS_TOL, feasibility_gap, mixing_value, primal_program

AUDIT_TOL = 1e-6
OVERSHOOT_TOL = 1e-6
REFINE_TOL = 1e-4
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass
class LinearSetSpec:
    """Grid of ``phi`` values with callbacks producing the inner LP data.

    ``build_b(phi, m)`` returns the L-vector whose inner product with ``pi``
    is the probability of outcome ``m``.  For binary outcomes only ``m = 1``
    is used.  ``history_model`` turns on the simplex checks on ``r`` and on
    the columns of ``G``.
    """

    phi_grid: np.ndarray
    build_G: Callable
    build_b: Callable
    r: np.ndarray
    num_outcomes: int = 2
    history_model: bool = False
    refine: bool = True
    feas_tol: float = FEAS_TOL
    audit_tol: float = AUDIT_TOL

    def __post_init__(self):
        grid = np.asarray(self.phi_grid, dtype=float)
        if grid.ndim == 0:
            grid = grid.reshape(1)
        if grid.size == 0:
            raise InputError("phi_grid is empty")
        self.phi_grid = grid
        self.r = np.asarray(self.r, dtype=float).ravel()
        if self.num_outcomes < 2:
            raise InputError(f"num_outcomes must be at least 2, got {self.num_outcomes}")
        if self.history_model:
            if np.any(self.r < 0) or abs(self.r.sum() - 1.0) > 1e-12:
                raise InputError("history-model target r must be a probability vector")

    @property
    def scalar_phi(self) -> bool:
        return self.phi_grid.ndim == 1

    def G(self, phi) -> np.ndarray:
        G = np.atleast_2d(np.asarray(self.build_G(phi), dtype=float))
        if G.shape[0] != self.r.size:
            raise InputError(f"build_G returned {G.shape[0]} rows; r has {self.r.size} entries")
        if self.history_model:
            if np.any(G < -1e-15) or np.max(np.abs(G.sum(axis=0) - 1.0)) > 1e-10:
                raise InputError(f"columns of G({phi}) are not probability vectors")
        return G

    def b(self, phi, m: int) -> np.ndarray:
        return np.asarray(self.build_b(phi, m), dtype=float).ravel()

    @property
    def support_size(self) -> int:
        return self.G(self.phi_grid[0]).shape[1]


@dataclass(frozen=True)
class FeasibleInterval:
    lo: float
    hi: float
    empty: bool = False

    def __post_init__(self):
        if not self.empty and self.lo > self.hi:
            raise ValueError(f"interval endpoints out of order: {self.lo} > {self.hi}")


@dataclass
class Extreme:
    """Outcome of one outer optimization: value, where it is attained, audit gap."""

    value: float
    phi: Optional[object]
    audit_gap: float


@dataclass
class BoundsReport:
    bounds: object  # BinaryBounds or MultinomialBounds
    argphi: dict
    audit_gap: float
    n_feasible: int
    feasible: FeasibleInterval


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("ROBUST_FORECAST_THREADS", "1")))
    except ValueError:
        return 1


def _ordered_map(fn, items):
    """``map`` that may run in threads but always returns results in input order."""
    n = _threads()
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def is_feasible(spec: LinearSetSpec, phi) -> bool:
    G = spec.G(phi)
    gap = feasibility_gap(primal_program(G, spec.r, np.zeros(G.shape[1])))
    return gap <= spec.feas_tol


def inner_value(spec: LinearSetSpec, phi, weights, maximize: bool) -> Tuple[float, float]:
    """Extreme of ``weights @ pi`` over the feasible ``pi`` at ``phi``.

    Returns ``(value, audit_gap)``; an empty set gives ``-inf`` for a maximum
    and ``+inf`` for a minimum.  The primal and dual routes must agree to
    ``spec.audit_tol``.
    """
    G = spec.G(phi)
    w = np.asarray(weights, dtype=float)
    primal = mixing_value(G, spec.r, w, maximize, "primal")
    dual = mixing_value(G, spec.r, w, maximize, "dual")
    if math.isinf(primal) or math.isinf(dual):
        if primal != dual:
            raise NumericalFailure(
                f"primal/dual disagree on feasibility at phi={phi}: primal {primal}, dual {dual}")
        return primal, 0.0
    gap = abs(primal - dual)
    if gap > spec.audit_tol:
        raise NumericalFailure(
            f"strong-duality audit failed at phi={phi}: primal {primal:.10g}, dual {dual:.10g}")
    return primal, gap


class _Scan:
    """Feasibility of every grid point plus bisection-refined transitions."""

    def __init__(self, spec: LinearSetSpec):
        self.spec = spec
        grid = spec.phi_grid
        self.feasible = np.array(_ordered_map(lambda phi: is_feasible(spec, phi), list(grid)))
        self.points: List[object] = [phi for phi, ok in zip(grid, self.feasible) if ok]
        self.boundary: List[float] = []
        if spec.scalar_phi and spec.refine and self.feasible.any():
            order = np.argsort(grid)
            g, f = grid[order], self.feasible[order]
            for i in range(len(g) - 1):
                if f[i] != f[i + 1]:
                    inside, outside = (g[i], g[i + 1]) if f[i] else (g[i + 1], g[i])
                    self.boundary.append(self._bisect(inside, outside))
            self.points = sorted(set(float(x) for x in self.points) | set(self.boundary))

    def _bisect(self, inside: float, outside: float) -> float:
        while abs(outside - inside) > REFINE_TOL:
            mid = 0.5 * (inside + outside)
            if is_feasible(self.spec, mid):
                inside = mid
            else:
                outside = mid
        return inside

    @property
    def any_feasible(self) -> bool:
        return bool(self.feasible.any())

    def interval(self) -> FeasibleInterval:
        if not self.any_feasible:
            return FeasibleInterval(math.nan, math.nan, empty=True)
        if not self.spec.scalar_phi:
            raise InputError("feasible interval needs a scalar phi grid")
        pts = [float(p) for p in self.points]
        return FeasibleInterval(min(pts), max(pts))


def _outer(spec: LinearSetSpec, scan: _Scan, weights_fn, maximize: bool) -> Extreme:
    """Outer search: best inner value over the feasible points, then refine."""
    sign = 1.0 if maximize else -1.0
    results = _ordered_map(lambda phi: inner_value(spec, phi, weights_fn(phi), maximize), scan.points)
    values = np.array([v for v, _ in results])
    audit = max((g for _, g in results), default=0.0)
    best = int(np.argmax(sign * values))
    best_val, best_phi = float(values[best]), scan.points[best]

    if spec.scalar_phi and spec.refine and len(scan.points) > 1:
        pts = np.asarray(scan.points, dtype=float)
        a = pts[max(best - 1, 0)]
        b = pts[min(best + 1, len(pts) - 1)]

        def f(phi):
            nonlocal audit
            v, g = inner_value(spec, phi, weights_fn(phi), maximize)
            audit = max(audit, g)
            return sign * v

        phi_r, val_r = _golden_max(f, a, b)
        if val_r > sign * best_val:
            best_val, best_phi = sign * val_r, phi_r
    return Extreme(best_val, best_phi, audit)


def _golden_max(f, a: float, b: float, tol: float = REFINE_TOL):
    """Golden-section search that returns the best point evaluated, not the last."""
    best_x, best_v = None, -math.inf

    def record(x):
        nonlocal best_x, best_v
        v = f(x)
        if v > best_v:
            best_x, best_v = x, v
        return v

    c, d = b - _GOLDEN * (b - a), a + _GOLDEN * (b - a)
    fc, fd = record(c), record(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = record(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = record(d)
    return best_x, best_v


def _checked_unit(value: float, what: str) -> float:
    if value < -OVERSHOOT_TOL or value > 1.0 + OVERSHOOT_TOL:
        raise NumericalFailure(f"{what} = {value:.10g} lies outside [0, 1] beyond tolerance")
    return min(max(value, 0.0), 1.0)


def _require_nonempty(scan: _Scan):
    if not scan.any_feasible:
        raise EmptyIdentifiedSet("no phi on the grid is consistent with the target r")


def binary_bounds_report(spec: LinearSetSpec, outcome: int = 1) -> BoundsReport:
    """Extreme probabilities of ``outcome`` with their arg-phi and audit gap."""
    scan = _Scan(spec)
    _require_nonempty(scan)
    lo = _outer(spec, scan, lambda phi: spec.b(phi, outcome), maximize=False)
    hi = _outer(spec, scan, lambda phi: spec.b(phi, outcome), maximize=True)
    bounds = BinaryBounds(_checked_unit(lo.value, "p_L"), _checked_unit(hi.value, "p_U"))
    interval = scan.interval() if spec.scalar_phi else FeasibleInterval(math.nan, math.nan)
    return BoundsReport(bounds, {"p_L": lo.phi, "p_U": hi.phi}, max(lo.audit_gap, hi.audit_gap),
                        len(scan.points), interval)


def extreme_probs_binary(spec: LinearSetSpec) -> BinaryBounds:
    if spec.num_outcomes != 2:
        raise InputError(f"binary bounds need num_outcomes = 2, got {spec.num_outcomes}")
    return binary_bounds_report(spec).bounds


def multinomial_bounds_report(spec: LinearSetSpec) -> BoundsReport:
    scan = _Scan(spec)
    _require_nonempty(scan)
    M = spec.num_outcomes
    lower, gaps, argphi, audit = [], [], {}, 0.0
    for m in range(M):
        ext = _outer(spec, scan, lambda phi, m=m: spec.b(phi, m), maximize=False)
        lower.append(_checked_unit(ext.value, f"lower probability of outcome {m}"))
        argphi[f"lower_{m}"] = ext.phi
        audit = max(audit, ext.audit_gap)
    for m in range(M):
        best, where = 0.0, None  # m' = m contributes zero
        for other in range(M):
            if other == m:
                continue
            ext = _outer(spec, scan, lambda phi, m=m, o=other: spec.b(phi, o) - spec.b(phi, m), maximize=True)
            audit = max(audit, ext.audit_gap)
            if ext.value > best:
                best, where = ext.value, ext.phi
        gaps.append(_checked_unit(best, f"regret gap of outcome {m}"))
        argphi[f"gap_{m}"] = where
    interval = scan.interval() if spec.scalar_phi else FeasibleInterval(math.nan, math.nan)
    return BoundsReport(MultinomialBounds(tuple(lower), tuple(gaps)), argphi, audit, len(scan.points), interval)


def extreme_probs_multinomial(spec: LinearSetSpec) -> MultinomialBounds:
    return multinomial_bounds_report(spec).bounds


def feasible_phi_interval(spec: LinearSetSpec) -> FeasibleInterval:
    """Smallest and largest feasible ``phi``, endpoints refined to width 1e-4."""
    if not spec.scalar_phi:
        raise InputError("feasible interval needs a scalar phi grid")
    if np.any(np.diff(spec.phi_grid) <= 0):
        raise InputError("phi_grid must be sorted and strictly increasing")
    return _Scan(spec).interval()


@dataclass(frozen=True)
class ProfileRow:
    phi: object
    lo: float
    hi: float


def profile_bounds(spec: LinearSetSpec, outcome: int = 1) -> List[ProfileRow]:
    """Inner min and max of the outcome probability at every feasible grid point."""
    def row(phi):
        w = spec.b(phi, outcome)
        lo, _ = inner_value(spec, phi, w, maximize=False)
        if math.isinf(lo):
            return None
        hi, _ = inner_value(spec, phi, w, maximize=True)
        return ProfileRow(phi, lo, hi)

    rows = _ordered_map(row, list(spec.phi_grid))
    return [r for r in rows if r is not None]


def write_profile_csv(rows: Sequence[ProfileRow], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["phi", "lo", "hi"])
        for r in rows:
            writer.writerow([_fmt_phi(r.phi), f"{r.lo:.6f}", f"{r.hi:.6f}"])


def _fmt_phi(phi) -> str:
    arr = np.atleast_1d(np.asarray(phi, dtype=float))
    return ";".join(f"{x:.6g}" for x in arr)
