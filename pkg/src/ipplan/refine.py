"""Per-edge B-spline refinement under budget, workspace, and obstacle constraints.

Each graph edge becomes a clamped cubic B-spline whose interior control
points are optimized to shrink the posterior trace, subject to an arc-length
cap and positive signed distances at sampled curve points. Constraints are
handled by an augmented Lagrangian with a quasi-Newton inner loop; obstacles
provably out of reach are pruned beforehand.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize

from .errors import InfeasibleError, ValidationError
from .gp import (
    KernelParams,
    MeasurementSet,
    TestSet,
    posterior_cov_trace,
    posterior_cov_trace_batch,
)
from .geometry import (
    Environment,
    ObstacleSet,
    prune_obstacles,
    workspace_signed_distances,
)

# Chord sums under-estimate arc length; the guard factor keeps the true
# length under the allocated budget at the default quadrature resolution.
LENGTH_GUARD = 1.002

FEAS_DIST_TOL = 1e-9
PRUNE_MARGIN_FRACTION = 1e-3  # of the kernel lengthscale


def clamped_uniform_knots(n_ctrl: int, degree: int) -> np.ndarray:
    if n_ctrl < degree + 1:
        raise ValidationError("need at least degree+1 control points")
    interior = n_ctrl - degree - 1
    inner = [(i + 1) / (interior + 1) for i in range(interior)]
    return np.array([0.0] * (degree + 1) + inner + [1.0] * (degree + 1))


def bspline_basis(t: float, degree: int, knots: np.ndarray) -> np.ndarray:
    """All basis weights at parameter t by the Cox-de Boor recurrence.

    Clamped knot vectors make the weights a partition of unity with
    e_0 at t=0 and e_r at t=1.
    """
    n_ctrl = len(knots) - degree - 1
    weights = np.zeros(n_ctrl)
    if t >= 1.0:
        weights[-1] = 1.0
        return weights
    t = max(float(t), 0.0)
    span = int(np.searchsorted(knots, t, side="right")) - 1
    span = min(max(span, degree), n_ctrl - 1)
    N = np.zeros(degree + 1)
    left = np.zeros(degree + 1)
    right = np.zeros(degree + 1)
    N[0] = 1.0
    for j in range(1, degree + 1):
        left[j] = t - knots[span + 1 - j]
        right[j] = knots[span + j] - t
        saved = 0.0
        for r in range(j):
            temp = N[r] / (right[r + 1] + left[j - r])
            N[r] = saved + right[r + 1] * temp
            saved = left[j - r] * temp
        N[j] = saved
    weights[span - degree : span + 1] = N
    return weights


_BASIS_CACHE: dict = {}


def basis_matrix(ts, degree: int, n_ctrl: int) -> np.ndarray:
    """Rows of basis weights for a parameter grid (cached for fixed grids)."""
    ts = np.asarray(ts, dtype=float)
    key = (degree, n_ctrl, ts.shape[0], round(float(ts[0]), 12), round(float(ts[-1]), 12))
    cached = _BASIS_CACHE.get(key)
    if cached is not None and cached.shape[0] == ts.shape[0]:
        return cached
    knots = clamped_uniform_knots(n_ctrl, degree)
    M = np.vstack([bspline_basis(t, degree, knots) for t in ts])
    if ts.shape[0] >= 8 and abs(ts[0]) < 1e-15 and abs(ts[-1] - 1.0) < 1e-15:
        _BASIS_CACHE[key] = M
    return M


@dataclass(frozen=True)
class SplineSegment:
    """Clamped uniform B-spline with pinned endpoint control points."""

    degree: int
    control_points: np.ndarray  # (r+1, 2)

    def __post_init__(self):
        P = np.asarray(self.control_points, dtype=float)
        if P.ndim != 2 or P.shape[1] != 2:
            raise ValidationError("control points must be (r+1, 2)")
        if P.shape[0] < self.degree + 1:
            raise ValidationError("need at least degree+1 control points")
        object.__setattr__(self, "control_points", P)

    @property
    def knots(self) -> np.ndarray:
        return clamped_uniform_knots(self.control_points.shape[0], self.degree)

    @property
    def start(self) -> np.ndarray:
        return self.control_points[0]

    @property
    def end(self) -> np.ndarray:
        return self.control_points[-1]


def eval_segment(seg: SplineSegment, t: float) -> np.ndarray:
    return bspline_basis(t, seg.degree, seg.knots) @ seg.control_points


def sample_segment(seg: SplineSegment, N: int) -> np.ndarray:
    """N curve points at the uniform parameters i/(N-1)."""
    if N < 2:
        raise ValidationError("need at least 2 samples")
    ts = np.linspace(0.0, 1.0, N)
    M = basis_matrix(ts, seg.degree, seg.control_points.shape[0])
    return M @ seg.control_points


def segment_arc_length(seg: SplineSegment, m_quad: int = 128) -> float:
    """Chord-sum over m_quad uniform subdivisions (under-estimates)."""
    if m_quad < 16:
        raise ValidationError("m_quad must be >= 16")
    pts = sample_segment(seg, m_quad + 1)
    return float(np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=1)))


def segment_objective(seg: SplineSegment, T: TestSet, params: KernelParams, N: int) -> float:
    X = MeasurementSet(sample_segment(seg, N))
    return posterior_cov_trace(T, X, params)


@dataclass(frozen=True)
class RefineConfig:
    degree: int = 3
    n_ctrl: int = 5
    n_measure: int = 8  # objective samples per segment
    n_env: int = 32
    n_obs: int = 32
    m_quad: int = 128
    guard: float = LENGTH_GUARD
    delta_safe: float = 0.0
    al_rounds: int = 8
    penalty_init: float = 10.0
    penalty_growth: float = 10.0
    inner_maxiter: int = 40
    n_starts: int = 4  # chord plus perturbed restarts
    perturb_scale: float = 0.1  # of the slack budget
    fd_step: float = 1e-6
    constraint_tol: float = 1e-6

    def __post_init__(self):
        for name in ("n_measure", "n_env", "n_obs"):
            if getattr(self, name) < 2:
                raise ValidationError(f"{name} must be >= 2")
        if self.m_quad < 16:
            raise ValidationError("m_quad must be >= 16")
        if self.guard < 1.0:
            raise ValidationError("guard must be >= 1")


def _central_fd_grad(f, x, h):
    g = np.zeros_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2.0 * h)
    return g


def _fd_stencil(x, h):
    """Rows x + h e_i and x - h e_i, interleaved."""
    dim = x.size
    X = np.repeat(x[None, :], 2 * dim, axis=0)
    idx = np.arange(dim)
    X[2 * idx, idx] += h
    X[2 * idx + 1, idx] -= h
    return X


DENSE_CHECK_SAMPLES = 257


class _SegmentProblem:
    """Constraint and objective evaluation for one segment refinement."""

    def __init__(self, u, v, L_e, T, env, obstacles, params, config):
        self.u = np.asarray(u, dtype=float)
        self.v = np.asarray(v, dtype=float)
        self.T = T
        self.params = params
        self.config = config
        self.env = env
        self.obstacles = list(obstacles)
        self.obs_set = ObstacleSet(obstacles) if obstacles else None
        self.n_ctrl = config.n_ctrl
        self.len_uv = float(np.linalg.norm(self.v - self.u))
        # A zero-slack budget must still admit the straight chord, so the
        # effective cap never drops below the endpoint distance.
        self.cap = max(L_e / config.guard, self.len_uv)
        self.B_meas = basis_matrix(np.linspace(0, 1, config.n_measure), config.degree, self.n_ctrl)
        self.B_env = basis_matrix(np.linspace(0, 1, config.n_env), config.degree, self.n_ctrl)
        self.B_obs = basis_matrix(np.linspace(0, 1, config.n_obs), config.degree, self.n_ctrl)
        self.B_quad = basis_matrix(np.linspace(0, 1, config.m_quad + 1), config.degree, self.n_ctrl)
        self.B_dense = basis_matrix(
            np.linspace(0, 1, DENSE_CHECK_SAMPLES), config.degree, self.n_ctrl
        )
        self.chord = np.linspace(self.u, self.v, self.n_ctrl)

    def control_points(self, x):
        P = self.chord.copy()
        P[1:-1] = x.reshape(-1, 2)
        return P

    def objective(self, x):
        pts = self.B_meas @ self.control_points(x)
        return posterior_cov_trace(self.T, MeasurementSet(pts), self.params)

    def _constraints_P(self, P):
        arc = float(np.sum(np.linalg.norm(np.diff(self.B_quad @ P, axis=0), axis=1)))
        g = [arc - self.cap]
        env_pts = self.B_env @ P
        g.append(float(-np.min(workspace_signed_distances(env_pts, self.env.workspace))))
        if self.obs_set is not None:
            obs_pts = self.B_obs @ P
            g.extend(self.config.delta_safe - self.obs_set.min_per_obstacle(obs_pts))
        return np.array(g)

    def constraints(self, x):
        """Vector g with the feasible set {g <= 0}."""
        return self._constraints_P(self.control_points(x))

    def merit_parts(self, x):
        """(objective, constraints) sharing one control-point expansion."""
        P = self.control_points(x)
        obj = posterior_cov_trace(self.T, MeasurementSet(self.B_meas @ P), self.params)
        return obj, self._constraints_P(P)

    def merit_parts_batch(self, X):
        """Batched (objectives, constraints) for a stack of variable vectors.

        Feeds the central-difference stencil in one shot; X is (B, dim).
        """
        X = np.asarray(X, dtype=float)
        bsize = X.shape[0]
        P = np.broadcast_to(self.chord, (bsize,) + self.chord.shape).copy()
        P[:, 1:-1, :] = X.reshape(bsize, -1, 2)
        objs = posterior_cov_trace_batch(self.T, self.B_meas @ P, self.params)
        quad = self.B_quad @ P
        arcs = np.sum(np.linalg.norm(np.diff(quad, axis=1), axis=-1), axis=1)
        cons = [arcs - self.cap]
        env_pts = (self.B_env @ P).reshape(-1, 2)
        env_d = workspace_signed_distances(env_pts, self.env.workspace).reshape(bsize, -1)
        cons.append(-env_d.min(axis=1))
        if self.obs_set is not None:
            obs_pts = (self.B_obs @ P).reshape(-1, 2)
            d = self.obs_set.distances(obs_pts).reshape(bsize, self.B_obs.shape[0], -1)
            cons.append(self.config.delta_safe - d.min(axis=1))  # (B, n_obs)
        g = np.hstack([c.reshape(bsize, -1) for c in cons])
        return objs, g

    def max_violation(self, x):
        return float(np.max(np.maximum(self.constraints(x), 0.0)))

    def dense_max_violation(self, x):
        """Acceptance check at validator density, not solver density."""
        P = self.control_points(x)
        arc = float(np.sum(np.linalg.norm(np.diff(self.B_quad @ P, axis=0), axis=1)))
        worst = arc - self.cap
        pts = self.B_dense @ P
        worst = max(worst, float(-np.min(workspace_signed_distances(pts, self.env.workspace))))
        if self.obs_set is not None:
            worst = max(worst, self.config.delta_safe - self.obs_set.min_distance(pts))
        return worst


def _augmented_lagrangian(problem: _SegmentProblem, x0, seed, require_feasible_start=True):
    """Minimize the segment objective under g<=0 starting from x0.

    Returns the best feasible candidate found together with diagnostics;
    the start point is always among the candidates when itself feasible.
    """
    config = problem.config
    rng = np.random.default_rng(seed)
    slack = problem.cap * config.guard - problem.len_uv
    dim = x0.size
    scale = max(1.0, problem.len_uv)
    h = config.fd_step * scale

    perturbs = rng.normal(size=(max(config.n_starts - 1, 0), dim))
    starts = [x0]
    if slack > 1e-12:
        for p in perturbs:
            starts.append(x0 + config.perturb_scale * slack * p)

    best_x = None
    best_obj = math.inf
    rounds_used = 0
    for xs in starts:
        lam = np.zeros_like(problem.constraints(xs))
        rho = config.penalty_init
        x = xs.copy()
        prev_viol = math.inf
        for rnd in range(config.al_rounds):
            rounds_used += 1

            def merit(xx, lam=lam, rho=rho):
                obj, g = problem.merit_parts(xx)
                shifted = np.maximum(0.0, lam + rho * g)
                return obj + float(np.sum(shifted**2 - lam**2)) / (2.0 * rho)

            def merit_grad(xx, lam=lam, rho=rho):
                vals_obj, vals_g = problem.merit_parts_batch(_fd_stencil(xx, h))
                shifted = np.maximum(0.0, lam[None, :] + rho * vals_g)
                merits = vals_obj + np.sum(shifted**2 - lam[None, :] ** 2, axis=1) / (2.0 * rho)
                return (merits[0::2] - merits[1::2]) / (2.0 * h)

            res = minimize(
                merit,
                x,
                method="L-BFGS-B",
                jac=merit_grad,
                options={"maxiter": config.inner_maxiter, "ftol": 1e-10, "gtol": 1e-8},
            )
            x = res.x
            g = problem.constraints(x)
            viol = float(np.max(np.maximum(g, 0.0)))
            lam = np.maximum(0.0, lam + rho * g)
            converged = viol <= config.constraint_tol
            if converged or rnd == config.al_rounds - 1:
                # Candidates are only accepted strictly feasible; a mildly
                # violating endpoint is shrunk toward the feasible anchor.
                cand = _repair_toward(problem, x0, x) if require_feasible_start else (
                    x if problem.dense_max_violation(x) <= 0.0 else None
                )
                if cand is not None:
                    obj = problem.objective(cand)
                    if obj < best_obj:
                        best_obj, best_x = obj, cand.copy()
                if converged and rnd >= 1:
                    break
            if viol > 0.25 * prev_viol:
                rho = min(rho * config.penalty_growth, 1e12)
            prev_viol = viol
    return best_x, best_obj, {"rounds": rounds_used, "starts": len(starts)}


def _repair_toward(problem, anchor, x, tries=40):
    """Largest feasible blend between a feasible anchor and a candidate.

    Feasibility here is the dense acceptance check, so accepted points
    cannot hide a violation between solver-resolution samples.
    """
    if problem.dense_max_violation(x) <= 0.0:
        return x
    lo, hi = 0.0, 1.0
    feasible = None
    for _ in range(tries):
        mid = 0.5 * (lo + hi)
        cand = anchor + mid * (x - anchor)
        if problem.dense_max_violation(cand) <= 0.0:
            lo, feasible = mid, cand
        else:
            hi = mid
    return feasible


def refine_segment(u, v, L_e, T, env, params, config=None, seed=0):
    """Optimize one edge's spline within its allocated budget.

    Returns (SplineSegment, diagnostics). The result is feasible and never
    worse than the straight chord, which is the fallback when no feasible
    improvement is found. Raises when the chord itself violates the safety
    clearance (graph validity should preclude this).
    """
    config = config or RefineConfig()
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    len_uv = float(np.linalg.norm(v - u))
    if L_e < len_uv - 1e-9:
        raise ValidationError(f"edge budget {L_e} below endpoint distance {len_uv}")
    margin = PRUNE_MARGIN_FRACTION * params.lengthscale
    kept = prune_obstacles(env, u, v, max(L_e, len_uv), margin)
    problem = _SegmentProblem(u, v, max(L_e, len_uv), T, env, kept, params, config)

    x0 = problem.chord[1:-1].ravel().copy()
    g0 = problem.constraints(x0)
    if problem.obstacles:
        worst = int(np.argmax(g0[2:]))
        if g0[2 + worst] > FEAS_DIST_TOL:
            offender = next(i for i, o in enumerate(env.obstacles) if o is kept[worst])
            raise InfeasibleError(
                f"straight edge violates clearance for obstacle {offender}"
            )
    straight_obj = problem.objective(x0)

    slack = L_e - len_uv
    if slack <= 1e-12:
        seg = SplineSegment(config.degree, problem.control_points(x0))
        return seg, {
            "objective": straight_obj,
            "straight_objective": straight_obj,
            "improved": False,
            "pruned_obstacles": len(env.obstacles) - len(kept),
            "arc_length": len_uv,
            "cap": problem.cap,
        }

    best_x, best_obj, al_diag = _augmented_lagrangian(problem, x0, seed)
    if best_x is None or best_obj > straight_obj:
        best_x, best_obj = x0, straight_obj
    seg = SplineSegment(config.degree, problem.control_points(best_x))
    diags = {
        "objective": best_obj,
        "straight_objective": straight_obj,
        "improved": bool(best_obj < straight_obj),
        "pruned_obstacles": len(env.obstacles) - len(kept),
        "arc_length": segment_arc_length(seg, config.m_quad),
        "cap": problem.cap,
        **al_diag,
    }
    return seg, diags


def distribute_measurements(allocated_lengths, N_total: int) -> list:
    """Per-segment sample counts proportional to allocation, each >= 2.

    Largest-remainder rounding of the proportional quotas, then a transfer
    pass enforcing the minimum of two samples per segment.
    """
    lengths = np.asarray(allocated_lengths, dtype=float)
    E = lengths.size
    if E == 0:
        return []
    if N_total < 2 * E:
        raise ValidationError(f"need at least {2 * E} measurements for {E} segments")
    quotas = N_total * lengths / lengths.sum()
    counts = np.floor(quotas).astype(int)
    remainder = N_total - counts.sum()
    order = np.lexsort((np.arange(E), -(quotas - counts)))
    for i in range(remainder):
        counts[order[i]] += 1
    while np.any(counts < 2):
        needy = int(np.argmin(counts))
        donor = int(np.argmax(counts))
        counts[donor] -= 1
        counts[needy] += 1
    return [int(c) for c in counts]


@dataclass(frozen=True)
class RefinedTrajectory:
    """Chained spline segments with their measurement samples and objective."""

    segments: tuple
    measurement_counts: tuple
    measurements: np.ndarray  # (N_total, 2), concatenated in segment order
    measurement_params: tuple  # (segment_index, t) per measurement row
    objective: float
    total_length: float
    per_segment_objectives: tuple = ()

    @property
    def n_measurements(self) -> int:
        return self.measurements.shape[0]


def assemble_trajectory(segments, allocated_lengths, T, params, N_total,
                        m_quad: int = 256) -> RefinedTrajectory:
    """Concatenate refined segments and score the union of their samples."""
    segments = tuple(segments)
    if not segments:
        raise ValidationError("cannot assemble an empty trajectory")
    for a, b in zip(segments, segments[1:]):
        if not np.array_equal(a.end, b.start):
            raise ValidationError("segment endpoints do not chain")
    counts = distribute_measurements(allocated_lengths, N_total)
    samples = [sample_segment(seg, c) for seg, c in zip(segments, counts)]
    measurements = np.vstack(samples)
    meas_params = tuple(
        (si, float(t))
        for si, c in enumerate(counts)
        for t in np.linspace(0.0, 1.0, c)
    )
    objective = posterior_cov_trace(T, MeasurementSet(measurements), params)
    per_seg = tuple(
        posterior_cov_trace(T, MeasurementSet(s), params) for s in samples
    )
    total = float(sum(segment_arc_length(seg, m_quad) for seg in segments))
    return RefinedTrajectory(
        segments=segments,
        measurement_counts=tuple(counts),
        measurements=measurements,
        measurement_params=meas_params,
        objective=objective,
        total_length=total,
        per_segment_objectives=per_seg,
    )


def trajectory_feasibility(segments, env: Environment, budget: float,
                           delta_safe: float = 0.0, n_check: int = 256) -> dict:
    """Shared feasibility validator used for every planner's output.

    Dense-samples each segment and reports the binding residuals; feasible
    means the total chord length fits the budget and every sample keeps the
    required clearance inside the workspace.
    """
    total = 0.0
    min_obs = math.inf
    min_env = math.inf
    obs_set = ObstacleSet(env.obstacles) if env.obstacles else None
    for seg in segments:
        pts = sample_segment(seg, n_check + 1)
        total += float(np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=1)))
        min_env = min(min_env, float(np.min(workspace_signed_distances(pts, env.workspace))))
        if obs_set is not None:
            min_obs = min(min_obs, obs_set.min_distance(pts))
    feasible = (
        total <= budget + 1e-6
        and min_env >= -FEAS_DIST_TOL
        and (not env.obstacles or min_obs >= delta_safe - FEAS_DIST_TOL)
    )
    return {
        "feasible": bool(feasible),
        "total_length": total,
        "min_obstacle_distance": None if not env.obstacles else min_obs,
        "min_workspace_distance": min_env,
    }
