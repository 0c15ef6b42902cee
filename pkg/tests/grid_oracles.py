"""Brute-force oracles over discretized simplices, independent of the package code."""
import itertools

import numpy as np


def _grid(dim, steps):
    """All points of the ``dim``-cube grid with coordinates k / steps, summing to at most 1."""
    if dim == 0:
        return np.zeros((1, 0))
    axes = np.meshgrid(*[np.arange(steps + 1) / steps] * dim, indexing="ij")
    pts = np.stack([a.ravel() for a in axes], axis=1)
    return pts[pts.sum(axis=1) <= 1 + 1e-12]


def constrained_simplex_max(G, r, b, mesh=1e-3):
    """``max b @ pi`` over the simplex with ``G @ pi = r`` by grid search.

    ``L - 1 - K`` weights run over a grid of the given mesh; the remaining
    ``K + 1`` weights (the best-conditioned block) are solved exactly from the moment and
    adding-up equations, and points with a negative solved weight are dropped.
    Returns ``-inf`` when no grid point is feasible.
    """
    G = np.atleast_2d(G)
    K, L = G.shape
    free = L - 1 - K
    if free < 0:
        raise ValueError("need L > K")
    A = np.vstack([G, np.ones((1, L))])
    rhs = np.r_[r, 1.0]
    # solve for the best-conditioned block of K + 1 weights
    solved = min(itertools.combinations(range(L), K + 1), key=lambda c: np.linalg.cond(A[:, c]))
    gridded = [j for j in range(L) if j not in solved]
    A, b = A[:, gridded + list(solved)], np.asarray(b, float)[gridded + list(solved)]
    M = A[:, free:]
    pts = _grid(free, int(round(1 / mesh)))
    rest = np.linalg.solve(M, (rhs[:, None] - A[:, :free] @ pts.T)).T
    ok = np.all(rest >= -1e-12, axis=1)
    if not ok.any():
        return -np.inf
    full = np.hstack([pts[ok], rest[ok]])
    return float(np.max(full @ b))


def kl_ball_max(p0, b, delta, mesh=5e-3, g=None, r=None, moment_tol=None):
    """``max b @ p`` over the simplex grid with ``KL(p || p0) <= delta``.

    Optional moment restriction ``|g @ p - r| <= moment_tol``.
    """
    p0 = np.asarray(p0, float)
    L = p0.size
    pts = _grid(L - 1, int(round(1 / mesh)))
    full = np.hstack([pts, 1 - pts.sum(axis=1, keepdims=True)])
    full = np.clip(full, 0, 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        kl = np.where(full > 0, full * np.log(full / p0), 0.0).sum(axis=1)
    ok = kl <= delta
    if g is not None:
        ok &= np.abs(full @ np.asarray(g, float) - r) <= moment_tol
    return float(np.max(full[ok] @ b)) if ok.any() else -np.inf


def simplex_grid(L, steps):
    """Iterate over all points of the L-simplex with coordinates k / steps."""
    for cut in itertools.combinations_with_replacement(range(steps + 1), L - 1):
        edges = (0,) + cut + (steps,)
        yield np.diff(edges) / steps
