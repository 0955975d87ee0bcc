"""Continuous-space and graph-only comparison planners.

CMA-ES and a penalty/augmented-Lagrangian gradient solver both optimize one
monolithic cubic B-spline from start to goal; the graph-only planner stops
after the discrete stage. Baseline outputs are judged by the same
feasibility validator as the hierarchical planner and may legitimately come
back flagged infeasible in clutter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .cmaes import CmaesConfig, cmaes_minimize
from .errors import ValidationError
from .gp import MeasurementSet, TestSet, posterior_cov_trace
from .geometry import ObstacleSet, prune_obstacles, workspace_signed_distances
from .graph import plan_graph_path
from .refine import (
    PRUNE_MARGIN_FRACTION,
    RefineConfig,
    RefinedTrajectory,
    SplineSegment,
    _SegmentProblem,
    _augmented_lagrangian,
    basis_matrix,
    sample_segment,
    segment_arc_length,
    trajectory_feasibility,
)

MONOLITHIC_CTRL_POINTS = 14
MONOLITHIC_CONSTRAINT_SAMPLES = 192


def _monolithic_trajectory(seg, scenario, T):
    N = scenario.n_measurements
    pts = sample_segment(seg, N)
    params = tuple((0, float(t)) for t in np.linspace(0.0, 1.0, N))
    objective = posterior_cov_trace(T, MeasurementSet(pts), scenario.kernel)
    return RefinedTrajectory(
        segments=(seg,),
        measurement_counts=(N,),
        measurements=pts,
        measurement_params=params,
        objective=objective,
        total_length=segment_arc_length(seg, 256),
        per_segment_objectives=(objective,),
    )


def plan_continuous_cmaes(scenario, config: CmaesConfig | None = None, test_set=None):
    """Monolithic spline optimization by CMA-ES with soft penalties.

    Budget and clearance violations enter the fitness as quadratic hinges;
    the returned flag records whether the best-ever spline actually passes
    the hard feasibility checks (failures are expected in heavy clutter).
    """
    config = config or CmaesConfig()
    T = test_set if test_set is not None else scenario.test_set()
    kernel = scenario.kernel
    env = scenario.environment
    B = scenario.budget
    s = scenario.start_point()
    g = scenario.goal_point()
    n_ctrl = MONOLITHIC_CTRL_POINTS
    chord = np.linspace(s, g, n_ctrl)

    N = scenario.n_measurements
    B_meas = basis_matrix(np.linspace(0, 1, N), 3, n_ctrl)
    B_con = basis_matrix(np.linspace(0, 1, MONOLITHIC_CONSTRAINT_SAMPLES), 3, n_ctrl)
    B_quad = basis_matrix(np.linspace(0, 1, 129), 3, n_ctrl)
    guard = RefineConfig().guard
    delta_safe = RefineConfig().delta_safe
    obstacles = prune_obstacles(env, s, g, B, PRUNE_MARGIN_FRACTION * kernel.lengthscale)
    obs_set = ObstacleSet(obstacles) if obstacles else None

    xmin, ymin, xmax, ymax = env.workspace
    diag = math.hypot(xmax - xmin, ymax - ymin)
    sigma0 = config.sigma0 if config.sigma0 is not None else 0.3 * diag
    w_budget = config.w_budget if config.w_budget is not None else 1e3 * kernel.signal_variance
    w_obstacle = config.w_obstacle if config.w_obstacle is not None else 1e4 * kernel.signal_variance
    w_workspace = config.w_workspace if config.w_workspace is not None else 1e4 * kernel.signal_variance

    def fitness(x):
        P = chord.copy()
        P[1:-1] = x.reshape(-1, 2)
        meas = B_meas @ P
        val = posterior_cov_trace(T, MeasurementSet(meas), kernel)
        arc = float(np.sum(np.linalg.norm(np.diff(B_quad @ P, axis=0), axis=1)))
        val += w_budget * max(0.0, guard * arc - B) ** 2
        con = B_con @ P
        ws = workspace_signed_distances(con, env.workspace)
        val += w_workspace * float(np.sum(np.maximum(0.0, -ws) ** 2))
        if obs_set is not None:
            d = obs_set.distances(con)
            val += w_obstacle * float(np.sum(np.maximum(0.0, delta_safe - d) ** 2))
        return val

    x0 = chord[1:-1].ravel()
    result = cmaes_minimize(
        fitness,
        x0,
        sigma0=sigma0,
        population=config.population,
        max_iters=config.max_iters,
        seed=config.seed,
    )
    P = chord.copy()
    P[1:-1] = result.x.reshape(-1, 2)
    seg = SplineSegment(3, P)
    traj = _monolithic_trajectory(seg, scenario, T)
    report = trajectory_feasibility(traj.segments, env, B, delta_safe)
    diagnostics = {
        "evaluations": result.evaluations,
        "generations": result.generations,
        "best_fitness": result.f,
        **report,
    }
    return traj, report["feasible"], diagnostics


def plan_continuous_gradient(scenario, config: RefineConfig | None = None,
                             seed: int = 0, test_set=None):
    """Monolithic spline refinement with the augmented-Lagrangian machinery.

    Same solver as the per-segment refinement, but spanning start to goal
    with the full budget and no graph guidance. A blocked straight-line
    initialization is not an error here; the run is simply flagged
    infeasible when no feasible spline is found.
    """
    base = config or RefineConfig()
    T = test_set if test_set is not None else scenario.test_set()
    env = scenario.environment
    B = scenario.budget
    s = scenario.start_point()
    g = scenario.goal_point()
    cfg = replace(
        base,
        n_ctrl=MONOLITHIC_CTRL_POINTS,
        n_measure=scenario.n_measurements,
        n_env=MONOLITHIC_CONSTRAINT_SAMPLES,
        n_obs=MONOLITHIC_CONSTRAINT_SAMPLES,
        al_rounds=5,
        n_starts=3,
        inner_maxiter=30,
    )
    kept = prune_obstacles(env, s, g, B, PRUNE_MARGIN_FRACTION * scenario.kernel.lengthscale)
    problem = _SegmentProblem(s, g, B, T, env, kept, scenario.kernel, cfg)
    x0 = problem.chord[1:-1].ravel().copy()
    chord_feasible = problem.max_violation(x0) <= 0.0
    best_x, best_obj, diag = _augmented_lagrangian(
        problem, x0, seed, require_feasible_start=chord_feasible
    )
    if best_x is None:
        best_x = x0  # nothing feasible found; report the chord, flagged below
    seg = SplineSegment(cfg.degree, problem.control_points(best_x))
    traj = _monolithic_trajectory(seg, scenario, T)
    report = trajectory_feasibility(traj.segments, env, B, cfg.delta_safe)
    diagnostics = {"chord_feasible": chord_feasible, **diag, **report}
    return traj, report["feasible"], diagnostics


def pad_counts(lengths, extra):
    """Largest-remainder split of `extra` items proportional to lengths."""
    lengths = np.asarray(lengths, dtype=float)
    if extra < 0:
        raise ValidationError("cannot pad with a negative count")
    quotas = extra * lengths / lengths.sum()
    counts = np.floor(quotas).astype(int)
    order = np.lexsort((np.arange(lengths.size), -(quotas - counts)))
    for i in range(extra - counts.sum()):
        counts[order[i]] += 1
    return [int(c) for c in counts]


def plan_graph_only(scenario, test_set=None, max_visits: int = 1):
    """Graph-stage plan with measurements at vertices, padded along edges.

    Padding keeps the measurement count equal to every other planner's:
    the path's vertices are measured once each and the remaining budget of
    samples is spread uniformly over the edges, proportional to length.
    """
    T = test_set if test_set is not None else scenario.test_set()
    path, graph_objective = plan_graph_path(
        scenario.graph, scenario.start, scenario.goal, scenario.budget,
        T, scenario.kernel, max_visits=max_visits,
    )
    verts = scenario.graph.vertices
    k = len(path.vertices) - 1
    N = scenario.n_measurements
    extra = N - (k + 1)
    if extra < 0:
        raise ValidationError(
            f"n_measurements {N} below the {k + 1} vertices of the planned path"
        )

    segments = tuple(
        SplineSegment(1, np.vstack([verts[a], verts[b]]))
        for a, b in zip(path.vertices, path.vertices[1:])
    )
    edge_lengths = [scenario.graph.edge_length(a, b) for a, b in zip(path.vertices, path.vertices[1:])]
    interior = pad_counts(edge_lengths, extra) if k > 0 else []

    rows = []
    meas_params = []
    counts = [0] * max(k, 1)
    for e in range(k):
        a = verts[path.vertices[e]]
        b = verts[path.vertices[e + 1]]
        ts = [0.0] + [j / (interior[e] + 1) for j in range(1, interior[e] + 1)]
        if e == k - 1:
            ts.append(1.0)
        for t in ts:
            rows.append(a * (1 - t) + b * t)
            meas_params.append((e, float(t)))
            counts[e] += 1
    if k == 0:
        rows = [verts[path.vertices[0]]] * N
        meas_params = [(0, 0.0)] * N
        counts = [N]
        segments = (SplineSegment(1, np.vstack([verts[path.vertices[0]]] * 2)),)

    measurements = np.asarray(rows)
    objective = posterior_cov_trace(T, MeasurementSet(measurements), scenario.kernel)
    traj = RefinedTrajectory(
        segments=segments,
        measurement_counts=tuple(counts),
        measurements=measurements,
        measurement_params=tuple(meas_params),
        objective=objective,
        total_length=path.total_length,
        per_segment_objectives=(),
    )
    return traj, path, {"vertex_objective": graph_objective, "padded": extra}
