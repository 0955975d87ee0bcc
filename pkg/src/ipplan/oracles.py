"""Independent reference implementations used for audits and tests.

These deliberately take the slow, literal route: explicit matrix inverses,
exhaustive enumeration, naive recursion, and brute-force grid search. They
must stay decoupled from the fast paths they check.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError
from .gp import KernelParams, MeasurementSet, TestSet, kernel_matrix


def dense_posterior_trace(T: TestSet, X: MeasurementSet, params: KernelParams) -> float:
    """Posterior trace via the explicit inverse of the full formula."""
    K_TT = kernel_matrix(T.points, T.points, params)
    if len(X) == 0:
        return float(np.trace(K_TT))
    K_TX = kernel_matrix(T.points, X.locations, params)
    K_XX = kernel_matrix(X.locations, X.locations, params)
    A = K_XX + params.noise_variance * np.eye(len(X))
    inv = np.linalg.inv(A)
    post = K_TT - K_TX @ inv @ K_TX.T
    return float(np.trace(post))


def dense_posterior_mean(T, X: MeasurementSet, params: KernelParams) -> np.ndarray:
    if X.values is None:
        raise ValidationError("oracle needs measurement values")
    T = np.asarray(T, dtype=float).reshape(-1, 2)
    K_TX = kernel_matrix(T, X.locations, params)
    K_XX = kernel_matrix(X.locations, X.locations, params)
    inv = np.linalg.inv(K_XX + params.noise_variance * np.eye(len(X)))
    return K_TX @ inv @ X.values


def floyd_warshall(n_vertices: int, edges_with_lengths) -> np.ndarray:
    """All-pairs shortest paths by the O(V^3) recurrence."""
    D = np.full((n_vertices, n_vertices), np.inf)
    np.fill_diagonal(D, 0.0)
    for (i, j), d in edges_with_lengths:
        D[i, j] = min(D[i, j], d)
        D[j, i] = min(D[j, i], d)
    for k in range(n_vertices):
        for i in range(n_vertices):
            for j in range(n_vertices):
                if D[i, k] + D[k, j] < D[i, j]:
                    D[i, j] = D[i, k] + D[k, j]
    return D


def grid_search_allocation(problem, resolution: float = 0.01):
    """Brute-force allocation over the full-budget face of the simplex.

    Only for up to three edges. Coverage is monotone in every allocation,
    so some optimum spends the whole budget; the grid walks that face at
    `resolution` times the slack.
    """
    from .allocation import allocation_objective

    E = problem.n_edges
    if E > 3:
        raise ValidationError("grid-search oracle supports at most 3 edges")
    lengths = problem.lengths
    B = problem.total_budget
    slack = B - float(lengths.sum())
    if slack < 0:
        raise ValidationError("infeasible allocation problem")
    if E == 1 or slack == 0.0:
        L = lengths.copy()
        if E == 1:
            L[0] += slack
        return L, allocation_objective(L, problem)[0]
    steps = int(round(1.0 / resolution))
    best_L, best_f = None, -np.inf
    if E == 2:
        for i in range(steps + 1):
            t = slack * i / steps
            L = lengths + np.array([t, slack - t])
            f, _ = allocation_objective(L, problem)
            if f > best_f:
                best_L, best_f = L, f
    else:
        for i in range(steps + 1):
            for j in range(steps + 1 - i):
                t1 = slack * i / steps
                t2 = slack * j / steps
                L = lengths + np.array([t1, t2, slack - t1 - t2])
                f, _ = allocation_objective(L, problem)
                if f > best_f:
                    best_L, best_f = L, f
    return best_L, best_f


def cox_de_boor_basis(t: float, i: int, degree: int, knots) -> float:
    """Literal recursive Cox-de Boor basis function N_{i,degree}(t)."""
    knots = np.asarray(knots, dtype=float)
    if degree == 0:
        last_span = np.max(np.nonzero(knots < knots[-1])[0])
        if knots[i] <= t < knots[i + 1]:
            return 1.0
        # Close the final half-open interval at t = 1.
        if t >= knots[-1] and i == last_span:
            return 1.0
        return 0.0
    left = 0.0
    if knots[i + degree] > knots[i]:
        left = (t - knots[i]) / (knots[i + degree] - knots[i]) * cox_de_boor_basis(
            t, i, degree - 1, knots
        )
    right = 0.0
    if knots[i + degree + 1] > knots[i + 1]:
        right = (knots[i + degree + 1] - t) / (knots[i + degree + 1] - knots[i + 1]) * (
            cox_de_boor_basis(t, i + 1, degree - 1, knots)
        )
    return left + right


def min_focal_sum_sampling(obs, u, v, n_samples: int = 1_000_000, seed: int = 0) -> float:
    """Rejection-sampling estimate of the focal-sum minimum over an obstacle."""
    from .geometry import Disk, signed_distances

    rng = np.random.default_rng(seed)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if isinstance(obs, Disk):
        lo = obs.center - obs.radius
        hi = obs.center + obs.radius
    else:
        lo = obs.vertices.min(axis=0)
        hi = obs.vertices.max(axis=0)
    pts = rng.uniform(lo, hi, size=(n_samples, 2))
    inside = signed_distances(pts, obs) <= 0
    pts = pts[inside]
    if pts.shape[0] == 0:
        raise ValidationError("sampling oracle found no interior points")
    sums = np.linalg.norm(pts - u, axis=1) + np.linalg.norm(pts - v, axis=1)
    return float(sums.min())
