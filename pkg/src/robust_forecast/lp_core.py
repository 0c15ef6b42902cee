"""Dense two-phase simplex and the dual form of the mixing-weight program.

The solver is deliberately simple: a revised simplex that refactorizes the
basis every iteration, Bland's smallest-index rule for both entering and
leaving variables, and explicit tolerances.
Problems in this package have at most a few hundred columns, so exact basis
identification and bit-reproducibility matter more than speed.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import InputError, NumericalFailure

PIVOT_TOL = 1e-11
COST_TOL = 1e-10
FEAS_TOL = 1e-8
MAX_NONZEROS = 10_000


@dataclass
class LpProblem:
    """``min`` or ``max`` of ``c @ x`` subject to ``A @ x (sense) rhs`` and bounds."""

    c: np.ndarray
    A: np.ndarray
    senses: Sequence[str]
    rhs: np.ndarray
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    maximize: bool = False

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        self.A = np.asarray(self.A, dtype=float).reshape(-1, n) if np.size(self.A) else np.zeros((0, n))
        self.rhs = np.asarray(self.rhs, dtype=float).ravel()
        self.senses = tuple(self.senses)
        m = self.A.shape[0]
        if self.A.shape[1] != n or self.rhs.size != m or len(self.senses) != m:
            raise InputError(f"dimension mismatch: c has {n} entries, A is {self.A.shape}, "
                             f"rhs has {self.rhs.size}, senses has {len(self.senses)}")
        bad = set(self.senses) - {"<=", "=", ">="}
        if bad:
            raise InputError(f"unknown row senses {sorted(bad)}")
        self.lower = np.zeros(n) if self.lower is None else np.asarray(self.lower, dtype=float).ravel()
        self.upper = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float).ravel()
        if self.lower.size != n or self.upper.size != n:
            raise InputError("variable bounds must have one entry per column")
        if np.isnan(self.c).any() or np.isnan(self.A).any() or np.isnan(self.rhs).any():
            raise InputError("NaN in LP data")
        if np.any(self.lower > self.upper):
            raise InputError("a variable has lower bound above its upper bound")

    @property
    def shape(self):
        return self.A.shape


@dataclass
class LpSolution:
    status: str  # optimal | infeasible | unbounded
    value: Optional[float] = None
    x: np.ndarray = field(default_factory=lambda: np.zeros(0))
    duals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    residual: float = 0.0
    slackness: float = 0.0
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


class _StandardForm:
    """``min c_s @ z`` s.t. ``A_s @ z = b_s``, ``z >= 0``, ``b_s >= 0``.

    Keeps the affine map ``x = offset + T @ z`` back to the user's variables
    and the row signs needed to recover dual multipliers.
    """

    def __init__(self, p: LpProblem):
        n = p.c.size
        cols = []  # (original var, coefficient)
        offset = np.zeros(n)
        extra_rows = []  # (column index in z, bound)
        for j in range(n):
            lo, hi = p.lower[j], p.upper[j]
            if np.isfinite(lo):
                offset[j] = lo
                cols.append((j, 1.0))
                if np.isfinite(hi):
                    extra_rows.append((len(cols) - 1, hi - lo))
            elif np.isfinite(hi):
                offset[j] = hi
                cols.append((j, -1.0))
            else:
                cols.append((j, 1.0))
                cols.append((j, -1.0))
        nz = len(cols)
        T = np.zeros((n, nz))
        for k, (j, s) in enumerate(cols):
            T[j, k] = s
        A = p.A @ T
        b = p.rhs - p.A @ offset
        senses = list(p.senses)
        for k, ub in extra_rows:
            row = np.zeros(nz)
            row[k] = 1.0
            A = np.vstack([A, row])
            b = np.append(b, ub)
            senses.append("<=")
        m = A.shape[0]
        n_slack = sum(s != "=" for s in senses)
        slack = np.zeros((m, n_slack))
        slack_of_row = np.full(m, -1)
        k = 0
        for i, s in enumerate(senses):
            if s != "=":
                slack[i, k] = 1.0 if s == "<=" else -1.0
                slack_of_row[i] = nz + k
                k += 1
        A = np.hstack([A, slack])
        sign = np.where(b < 0, -1.0, 1.0)
        self.A = A * sign[:, None]
        self.b = b * sign
        self.sign = sign
        self.slack_of_row = slack_of_row
        self.n_user_rows = p.A.shape[0]
        cost = p.c @ T
        self.flip = -1.0 if p.maximize else 1.0
        self.c = np.concatenate([self.flip * cost, np.zeros(n_slack)])
        self.T = T
        self.offset = offset
        self.nz = nz

    def to_user(self, z):
        return self.offset + self.T @ z[: self.nz]


def _simplex(A, b, c, basis, allowed, max_iter, it=0):
    """Revised primal simplex with Bland's smallest-index rule.

    The basis is refactorized from scratch every iteration; the problems are
    small enough that stability is worth more than the saved solves.
    """
    basis = np.array(basis)
    scale_a = max(1.0, float(np.max(np.abs(A), initial=0.0)))
    while True:
        B = A[:, basis]
        xB = np.linalg.solve(B, b)
        y = np.linalg.solve(B.T, c[basis])
        reduced = c - A.T @ y
        reduced[basis] = 0.0
        # tolerances scale with the multipliers so rounding noise in an
        # ill-conditioned basis is not mistaken for an improving direction
        tol = COST_TOL * max(1.0, float(np.max(np.abs(y), initial=0.0)) * scale_a)
        candidates = np.flatnonzero((reduced < -tol) & allowed)
        if candidates.size == 0:
            return "optimal", basis, xB, y, it
        if it >= max_iter:
            raise NumericalFailure(f"simplex iteration limit {max_iter} exceeded")
        col = int(candidates[0])
        u = np.linalg.solve(B, A[:, col])
        pos = np.flatnonzero(u > PIVOT_TOL * max(1.0, float(np.max(np.abs(u)))))
        if pos.size == 0:
            return "unbounded", basis, xB, y, it
        ratios = np.maximum(xB[pos], 0.0) / u[pos]
        best = ratios.min()
        tied = pos[ratios <= best + 1e-12 * max(1.0, best)]
        basis[tied[np.argmin(basis[tied])]] = col
        it += 1


def _phase_one(sf: _StandardForm, max_iter):
    """Minimize the sum of artificials; returns the state needed for phase two."""
    m, n = sf.A.shape
    # rows whose slack already has a +1 coefficient start with the slack basic
    basis = [-1] * m
    for i in range(m):
        k = sf.slack_of_row[i]
        if k >= 0 and sf.A[i, k] == 1.0:
            basis[i] = k
    art_rows = [i for i in range(m) if basis[i] < 0]
    art = np.zeros((m, len(art_rows)))
    for k, i in enumerate(art_rows):
        art[i, k] = 1.0
        basis[i] = n + k
    A = np.hstack([sf.A, art])
    c = np.r_[np.zeros(n), np.ones(len(art_rows))]
    allowed = np.ones(A.shape[1], dtype=bool)
    if not art_rows:
        return A, np.array(basis), art_rows, 0.0, 0
    _, basis, xB, _, it = _simplex(A, sf.b, c, basis, allowed, max_iter)
    gap = float(np.sum(xB[basis >= n]))
    return A, basis, art_rows, max(gap, 0.0), it


def feasibility_gap(p: LpProblem) -> float:
    """Optimal phase-one objective: 0 for feasible problems, > 0 otherwise."""
    sf = _StandardForm(p)
    return _phase_one(sf, _iteration_limit(sf))[3]


def _iteration_limit(sf):
    return 50 * (sf.A.shape[0] + sf.A.shape[1])


def solve_lp(p: LpProblem, feas_tol: float = FEAS_TOL, max_nonzeros: int = MAX_NONZEROS) -> LpSolution:
    nnz = int(np.count_nonzero(p.A))
    if nnz > max_nonzeros:
        raise InputError(f"LP has {nnz} nonzeros, above the configured limit {max_nonzeros}")
    sf = _StandardForm(p)
    m, n = sf.A.shape
    max_iter = _iteration_limit(sf)
    A, basis, art_rows, gap, it = _phase_one(sf, max_iter)
    if gap > feas_tol:
        return LpSolution("infeasible", iterations=it)

    # swap zero-level artificials out of the basis; drop redundant rows
    keep = np.ones(m, dtype=bool)
    while np.any(basis >= n):
        pos = int(np.flatnonzero(basis >= n)[0])
        rows = np.flatnonzero(keep)
        row_of_binv = np.linalg.solve(A[np.ix_(rows, basis)].T, _unit(len(rows), pos))
        tableau_row = row_of_binv @ A[rows, :n]
        entering = np.setdiff1d(np.flatnonzero(np.abs(tableau_row) > 1e-9), basis)
        if entering.size:
            basis[pos] = entering[0]
        else:
            keep[art_rows[basis[pos] - n]] = False
            basis = np.delete(basis, pos)
    rows = np.flatnonzero(keep)
    A2 = A[np.ix_(rows, np.arange(n))]
    status, basis, xB, y_k, it = _simplex(A2, sf.b[rows], sf.c, basis, np.ones(n, dtype=bool), max_iter, it)
    if status == "unbounded":
        return LpSolution("unbounded", iterations=it)

    z = np.zeros(n)
    z[basis] = np.maximum(xB, 0.0)
    x = sf.to_user(z)
    value = float(p.c @ x)
    y_s = np.zeros(m)
    y_s[rows] = y_k
    y = (sf.flip * sf.sign * y_s)[: sf.n_user_rows]

    residual = _residual(p, x)
    slack = p.rhs - p.A @ x
    ineq = np.array([s != "=" for s in p.senses], dtype=bool)
    slackness = float(np.max(np.abs(y[ineq] * slack[ineq]), initial=0.0))
    return LpSolution("optimal", value, x, y, residual, slackness, it)


def _unit(n, i):
    e = np.zeros(n)
    e[i] = 1.0
    return e


def _residual(p: LpProblem, x) -> float:
    ax = p.A @ x
    viol = [0.0]
    for s, lhs, r in zip(p.senses, ax, p.rhs):
        if s == "<=":
            viol.append(lhs - r)
        elif s == ">=":
            viol.append(r - lhs)
        else:
            viol.append(abs(lhs - r))
    viol.append(float(np.max(p.lower - x, initial=0.0)))
    viol.append(float(np.max(x - p.upper, initial=0.0)))
    return max(0.0, max(viol))


# ---------------------------------------------------------------------------
# mixing-weight programs


@dataclass
class DualizedProgram:
    """Dual of ``sup/inf b @ pi`` over the simplex subject to ``G @ pi = r``.

    ``form="inf"`` is ``min [0_K, 1] v  s.t.  A v <= -b`` and equals the
    primal supremum; ``form="sup"`` is ``max [0_K, -1] v  s.t.  A v <= b``
    and equals the primal infimum.  ``v = (mu, t)`` is unrestricted.

    ``to_lp`` works with the shifted intercept ``s = t - shift`` so that the
    right-hand side is nonnegative and the all-slack basis is feasible; the
    dual is always feasible and this removes the need for a phase one that
    can be badly conditioned.  ``objective_value`` undoes the shift.
    """

    A: np.ndarray
    rhs: np.ndarray
    objective: np.ndarray
    form: str

    @property
    def shift(self) -> float:
        return float(max(0.0, -np.min(self.rhs, initial=0.0)))

    def to_lp(self) -> LpProblem:
        k = self.A.shape[1]
        return LpProblem(
            c=self.objective,
            A=self.A,
            senses=["<="] * self.A.shape[0],
            rhs=self.rhs + self.shift,
            lower=np.full(k, -np.inf),
            upper=np.full(k, np.inf),
            maximize=self.form == "sup",
        )

    def objective_value(self, shifted_value: float) -> float:
        """Objective in the original intercept ``t = s + shift``."""
        return shifted_value + self.objective[-1] * self.shift

    def unshift(self, v_shifted) -> np.ndarray:
        v = np.array(v_shifted, dtype=float)
        v[-1] += self.shift
        return v


def _check_mixing_dims(G, r, b):
    G = np.atleast_2d(np.asarray(G, dtype=float))
    r = np.asarray(r, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if G.shape != (r.size, b.size):
        raise InputError(f"G has shape {G.shape}; expected ({r.size}, {b.size}) from r and b")
    return G, r, b


def dualize_sup(G, r, b, form: str = "inf") -> DualizedProgram:
    G, r, b = _check_mixing_dims(G, r, b)
    K, L = G.shape
    A = np.hstack([G.T - np.ones((L, 1)) * r[None, :], -np.ones((L, 1))])
    if form == "inf":
        return DualizedProgram(A, -b, np.r_[np.zeros(K), 1.0], "inf")
    if form == "sup":
        return DualizedProgram(A, b, np.r_[np.zeros(K), -1.0], "sup")
    raise InputError(f"form must be 'inf' or 'sup', got {form!r}")


def primal_program(G, r, b, maximize: bool = True) -> LpProblem:
    """``max`` (or ``min``) ``b @ pi`` over the simplex subject to ``G @ pi = r``."""
    G, r, b = _check_mixing_dims(G, r, b)
    K, L = G.shape
    A = np.vstack([G, np.ones((1, L))])
    return LpProblem(c=b, A=A, senses=["="] * (K + 1), rhs=np.r_[r, 1.0], maximize=maximize)


def mixing_value(G, r, b, maximize: bool = True, route: str = "primal") -> float:
    """Extreme value of ``b @ pi`` with the infeasible-set convention.

    An empty feasible set maps to ``-inf`` for the supremum and ``+inf`` for
    the infimum.  ``route="dual"`` solves the dual program instead.
    """
    empty = -np.inf if maximize else np.inf
    if route == "primal":
        sol = solve_lp(primal_program(G, r, b, maximize))
        return sol.value if sol.optimal else empty
    prog = dualize_sup(G, r, b, "inf" if maximize else "sup")
    sol = solve_lp(prog.to_lp())
    if sol.status == "unbounded":
        return empty
    if not sol.optimal:
        raise NumericalFailure("dual program reported infeasible; the dual is always feasible")
    return prog.objective_value(sol.value)
