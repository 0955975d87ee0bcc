"""Scenario files: the JSON surface tying together environment, graph,
kernel, budget, and test set.

Loading validates every invariant (schema, geometry, graph collision
freedom, budget feasibility) and resolves grid references. Saving emits a
canonical form that round-trips bit-exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .geometry import (
    Environment,
    obstacle_from_dict,
    signed_distances,
    workspace_signed_distances,
)
from .gp import FieldGrid, KernelParams, TestSet, sample_test_points
from .graph import InformativeGraph, goal_distances

SCHEMA_VERSION = 1
EDGE_CHECK_SAMPLES = 128

_TOP_KEYS = (
    "schema_version",
    "workspace",
    "obstacles",
    "graph",
    "kernel",
    "budget",
    "start",
    "goal",
    "test_points",
    "test_sampling",
    "importance_grid",
    "truth_grid",
    "n_measurements",
)


@dataclass(frozen=True)
class Scenario:
    environment: Environment
    graph: InformativeGraph
    kernel: KernelParams
    budget: float
    start: int
    goal: int
    n_measurements: int
    test_points: np.ndarray | None = None
    test_sampling: dict | None = None  # {"m": int, "seed": int}
    importance_ref: object = None  # path string or inline grid dict
    truth_ref: object = None
    importance_grid: FieldGrid | None = None
    truth_grid: FieldGrid | None = None

    def test_set(self) -> TestSet:
        if self.test_points is not None:
            return TestSet(self.test_points)
        return sample_test_points(
            self.importance_grid,
            self.environment,
            int(self.test_sampling["m"]),
            int(self.test_sampling["seed"]),
        )

    def shortest_path_length(self) -> float:
        return float(goal_distances(self.graph, self.goal)[self.start])

    def start_point(self) -> np.ndarray:
        return self.graph.vertices[self.start]

    def goal_point(self) -> np.ndarray:
        return self.graph.vertices[self.goal]


def _check_edges_collision_free(graph: InformativeGraph, env: Environment):
    ts = np.linspace(0.0, 1.0, EDGE_CHECK_SAMPLES)[:, None]
    for k, (i, j) in enumerate(graph.edges):
        pts = graph.vertices[i] * (1 - ts) + graph.vertices[j] * ts
        if np.min(workspace_signed_distances(pts, env.workspace)) < 0:
            raise ValidationError(
                f"edge {k} ({i},{j}) leaves the workspace", field=f"graph.edges[{k}]"
            )
        for oi, obs in enumerate(env.obstacles):
            if np.min(signed_distances(pts, obs)) < 0:
                raise ValidationError(
                    f"edge {k} ({i},{j}) crosses obstacle {oi}", field=f"graph.edges[{k}]"
                )


def _resolve_grid(ref, base_dir, expected_semantics, key):
    if ref is None:
        return None
    if isinstance(ref, dict):
        grid = FieldGrid.from_dict(ref)
    elif isinstance(ref, str):
        path = Path(ref)
        if not path.is_absolute():
            path = Path(base_dir or ".") / path
        if not path.exists():
            raise ValidationError(f"grid reference '{ref}' not found", field=key)
        grid = FieldGrid.load(path)
    else:
        raise ValidationError(f"{key} must be a path or an inline grid object", field=key)
    if grid.semantics != expected_semantics:
        raise ValidationError(
            f"{key} has semantics '{grid.semantics}', expected '{expected_semantics}'",
            field=key,
        )
    return grid


def scenario_from_dict(d: dict, base_dir=None) -> Scenario:
    if not isinstance(d, dict):
        raise ValidationError("scenario must be a JSON object")
    unknown = set(d) - set(_TOP_KEYS)
    if unknown:
        raise ValidationError(f"unknown scenario fields: {sorted(unknown)}")
    if d.get("schema_version") != SCHEMA_VERSION:
        raise ValidationError("schema_version must be 1", field="schema_version")
    for key in ("workspace", "obstacles", "graph", "kernel", "budget", "start", "goal", "n_measurements"):
        if key not in d:
            raise ValidationError(f"missing scenario field '{key}'", field=key)

    env = Environment(tuple(d["workspace"]), tuple(obstacle_from_dict(o) for o in d["obstacles"]))
    gspec = d["graph"]
    if not isinstance(gspec, dict) or "vertices" not in gspec or "edges" not in gspec:
        raise ValidationError("graph needs 'vertices' and 'edges'", field="graph")
    graph = InformativeGraph(np.asarray(gspec["vertices"], dtype=float),
                             tuple(tuple(e) for e in gspec["edges"]))
    for vi, vert in enumerate(graph.vertices):
        if not env.point_in_free_space(vert):
            raise ValidationError(f"vertex {vi} is not in free space", field=f"graph.vertices[{vi}]")
    _check_edges_collision_free(graph, env)

    kspec = dict(d["kernel"])
    known_kernel = {"lengthscale", "signal_variance", "noise_variance", "influence_tolerance"}
    if set(kspec) - known_kernel:
        raise ValidationError(f"unknown kernel fields: {sorted(set(kspec) - known_kernel)}", field="kernel")
    kernel = KernelParams(
        lengthscale=float(kspec["lengthscale"]),
        signal_variance=float(kspec["signal_variance"]),
        noise_variance=float(kspec["noise_variance"]),
        influence_tolerance=(
            float(kspec["influence_tolerance"]) if "influence_tolerance" in kspec else None
        ),
    )

    start, goal = int(d["start"]), int(d["goal"])
    if not (0 <= start < graph.n_vertices and 0 <= goal < graph.n_vertices):
        raise ValidationError("start/goal must index graph vertices", field="start")
    if start == goal:
        raise ValidationError("start and goal must differ", field="goal")

    budget = float(d["budget"])
    shortest = float(goal_distances(graph, goal)[start])
    if not np.isfinite(shortest):
        raise ValidationError("goal unreachable from start", field="graph.edges")
    if budget < shortest - 1e-9:
        raise ValidationError(
            f"budget {budget} below shortest path {shortest} (deficit {shortest - budget})",
            field="budget",
        )

    n_meas = int(d["n_measurements"])
    if n_meas < 2:
        raise ValidationError("n_measurements must be >= 2", field="n_measurements")

    test_points = None
    test_sampling = None
    if ("test_points" in d) == ("test_sampling" in d):
        raise ValidationError("exactly one of test_points / test_sampling required")
    importance = _resolve_grid(d.get("importance_grid"), base_dir, "importance", "importance_grid")
    if "test_points" in d:
        test_points = np.asarray(d["test_points"], dtype=float)
        if test_points.ndim != 2 or test_points.shape[1] != 2 or test_points.shape[0] < 1:
            raise ValidationError("test_points must be a nonempty list of [x, y]", field="test_points")
        inside = workspace_signed_distances(test_points, env.workspace) >= 0
        if not np.all(inside):
            bad = int(np.nonzero(~inside)[0][0])
            raise ValidationError(f"test point {bad} outside workspace", field=f"test_points[{bad}]")
    else:
        ts = dict(d["test_sampling"])
        if set(ts) - {"m", "seed"}:
            raise ValidationError("test_sampling takes only 'm' and 'seed'", field="test_sampling")
        if int(ts.get("m", 0)) < 1:
            raise ValidationError("test_sampling.m must be >= 1", field="test_sampling.m")
        if importance is None:
            raise ValidationError("test_sampling requires an importance_grid", field="importance_grid")
        test_sampling = {"m": int(ts["m"]), "seed": int(ts.get("seed", 0))}
    truth = _resolve_grid(d.get("truth_grid"), base_dir, "truth", "truth_grid")

    return Scenario(
        environment=env,
        graph=graph,
        kernel=kernel,
        budget=budget,
        start=start,
        goal=goal,
        n_measurements=n_meas,
        test_points=test_points,
        test_sampling=test_sampling,
        importance_ref=d.get("importance_grid"),
        truth_ref=d.get("truth_grid"),
        importance_grid=importance,
        truth_grid=truth,
    )


def scenario_to_dict(s: Scenario) -> dict:
    d = {
        "schema_version": SCHEMA_VERSION,
        "workspace": [float(v) for v in s.environment.workspace],
        "obstacles": [obs.to_dict() for obs in s.environment.obstacles],
        "graph": {
            "vertices": [[float(x), float(y)] for x, y in s.graph.vertices],
            "edges": [[int(i), int(j)] for i, j in s.graph.edges],
        },
        "kernel": {
            "lengthscale": s.kernel.lengthscale,
            "signal_variance": s.kernel.signal_variance,
            "noise_variance": s.kernel.noise_variance,
        },
        "budget": s.budget,
        "start": s.start,
        "goal": s.goal,
    }
    if s.kernel.influence_tolerance is not None:
        d["kernel"]["influence_tolerance"] = s.kernel.influence_tolerance
    if s.test_points is not None:
        d["test_points"] = [[float(x), float(y)] for x, y in s.test_points]
    else:
        d["test_sampling"] = {"m": s.test_sampling["m"], "seed": s.test_sampling["seed"]}
    if s.importance_ref is not None:
        d["importance_grid"] = s.importance_ref
    if s.truth_ref is not None:
        d["truth_grid"] = s.truth_ref
    d["n_measurements"] = s.n_measurements
    return d


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        with open(path) as f:
            raw = json.load(f)
    except json.JSONDecodeError as e:
        raise ValidationError(f"scenario file is not valid JSON: {e}") from None
    return scenario_from_dict(raw, base_dir=path.parent)


def save_scenario(scenario: Scenario, path) -> None:
    with open(path, "w") as f:
        json.dump(scenario_to_dict(scenario), f, indent=2)
        f.write("\n")
