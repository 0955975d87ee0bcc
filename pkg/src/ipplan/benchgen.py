"""Seeded benchmark scenario generation.

Reproduces the scale of the obstacle-cluttered comparison setting: a square
workspace with a dozen convex obstacles, a small PRM-style roadmap trimmed
to a fixed edge count, a sufficiently separated start/goal pair, and random
free-space test points. Deterministic given the seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GenerationError
from .geometry import (
    ConvexPolygon,
    Disk,
    Environment,
    signed_distances,
    workspace_signed_distances,
)
from .gp import KernelParams
from .graph import InformativeGraph, goal_distances
from .scenario import Scenario, scenario_from_dict, scenario_to_dict

MAX_ATTEMPTS = 60
CONNECTIVITY_GRID = 64
MIN_FREE_FRACTION = 0.42


@dataclass(frozen=True)
class BenchmarkConfig:
    """Benchmark scale; defaults mirror the cluttered comparison setting."""

    workspace: tuple = (0.0, 0.0, 3.5, 3.5)
    n_obstacles: int = 12
    n_vertices: int = 11
    n_edges: int = 22
    m_test: int = 35
    budget: float = 14.0
    min_separation: float = 1.0
    n_measurements: int = 60
    kernel: KernelParams = field(
        default_factory=lambda: KernelParams(0.35, 10.0, 0.1)
    )
    # Placement knobs.
    obstacle_radius_range: tuple = (0.22, 0.52)
    vertex_clearance: float = 0.10
    vertex_min_separation: float = 0.5
    k_nearest: int = 6
    edge_clearance: float = 0.02


def _random_convex_polygon(rng, center, radius):
    for _ in range(30):
        n = int(rng.integers(3, 7))
        angles = np.sort(rng.uniform(0.0, 2 * math.pi, n))
        if np.min(np.diff(np.concatenate([angles, [angles[0] + 2 * math.pi]]))) < 0.45:
            continue
        radii = radius * rng.uniform(0.65, 1.0, n)
        verts = np.column_stack(
            [center[0] + radii * np.cos(angles), center[1] + radii * np.sin(angles)]
        )
        try:
            return ConvexPolygon(verts)
        except Exception:
            continue
    return None


def _free_space_connected(workspace, obstacles, n: int = CONNECTIVITY_GRID):
    """Flood fill over grid cell centers; returns (connected, free_fraction)."""
    xmin, ymin, xmax, ymax = workspace
    xs = np.linspace(xmin, xmax, n + 2)[1:-1]
    ys = np.linspace(ymin, ymax, n + 2)[1:-1]
    pts = np.column_stack([g.ravel() for g in np.meshgrid(xs, ys)])
    free = np.ones(pts.shape[0], dtype=bool)
    for obs in obstacles:
        free &= signed_distances(pts, obs) > 0
    free = free.reshape(n, n)
    total = int(free.sum())
    if total == 0:
        return False, 0.0
    start = tuple(np.argwhere(free)[0])
    stack = [start]
    seen = np.zeros_like(free)
    seen[start] = True
    count = 0
    while stack:
        i, j = stack.pop()
        count += 1
        for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            a, b = i + di, j + dj
            if 0 <= a < n and 0 <= b < n and free[a, b] and not seen[a, b]:
                seen[a, b] = True
                stack.append((a, b))
    return count == total, total / free.size


def _place_obstacles(rng, config):
    xmin, ymin, xmax, ymax = config.workspace
    lo, hi = config.obstacle_radius_range
    margin = 0.15  # obstacles may poke past the boundary, centers stay inside
    gap = 0.22  # corridor width between obstacle boundaries
    obstacles = []
    for _ in range(config.n_obstacles):
        placed = False
        for _ in range(200):
            center = np.array(
                [rng.uniform(xmin + margin, xmax - margin), rng.uniform(ymin + margin, ymax - margin)]
            )
            radius = rng.uniform(lo, hi)
            too_close = any(
                float(np.linalg.norm(center - _obstacle_center(o))) < radius + _obstacle_radius(o) + gap
                for o in obstacles
            )
            if too_close:
                continue
            if rng.random() < 0.5:
                cand = Disk(center, radius)
            else:
                cand = _random_convex_polygon(rng, center, radius)
                if cand is None:
                    continue
            connected, frac = _free_space_connected(config.workspace, obstacles + [cand])
            if connected and frac >= MIN_FREE_FRACTION:
                obstacles.append(cand)
                placed = True
                break
        if not placed:
            return None
    return tuple(obstacles)


def _obstacle_center(obs):
    return obs.center if isinstance(obs, Disk) else obs.vertices.mean(axis=0)


def _obstacle_radius(obs):
    if isinstance(obs, Disk):
        return obs.radius
    c = obs.vertices.mean(axis=0)
    return float(np.max(np.linalg.norm(obs.vertices - c, axis=1)))


def _sample_free_points(rng, env, count, clearance, min_sep, tries=4000):
    xmin, ymin, xmax, ymax = env.workspace
    pts = []
    for _ in range(tries):
        if len(pts) == count:
            break
        p = np.array([rng.uniform(xmin, xmax), rng.uniform(ymin, ymax)])
        if workspace_signed_distances(p[None], env.workspace)[0] < clearance:
            continue
        if env.min_obstacle_distance(p) < clearance:
            continue
        if any(np.linalg.norm(p - q) < min_sep for q in pts):
            continue
        pts.append(p)
    return np.array(pts) if len(pts) == count else None


def _edge_collision_free(env, a, b, clearance, samples=64):
    ts = np.linspace(0.0, 1.0, samples)[:, None]
    pts = a * (1 - ts) + b * ts
    if np.min(workspace_signed_distances(pts, env.workspace)) < 0:
        return False
    for obs in env.obstacles:
        if np.min(signed_distances(pts, obs)) < clearance:
            return False
    return True


def _components(n, edges):
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, j in edges:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
    return len({find(v) for v in range(n)})


def _build_roadmap(rng, env, vertices, config):
    n = vertices.shape[0]
    dists = np.linalg.norm(vertices[:, None] - vertices[None, :], axis=-1)
    candidates = set()
    for i in range(n):
        order = np.argsort(dists[i])
        added = 0
        for j in order[1:]:
            if added >= config.k_nearest:
                break
            key = (min(i, int(j)), max(i, int(j)))
            if key in candidates:
                added += 1
                continue
            if _edge_collision_free(env, vertices[i], vertices[int(j)], config.edge_clearance):
                candidates.add(key)
                added += 1
    candidates = sorted(candidates, key=lambda e: (dists[e[0], e[1]], e))
    if _components(n, candidates) != 1:
        return None
    if len(candidates) < config.n_edges:
        # Augment from the remaining collision-free pairs, shortest first.
        rest = sorted(
            (
                (i, j)
                for i in range(n)
                for j in range(i + 1, n)
                if (i, j) not in set(candidates)
            ),
            key=lambda e: (dists[e[0], e[1]], e),
        )
        for i, j in rest:
            if len(candidates) >= config.n_edges:
                break
            if _edge_collision_free(env, vertices[i], vertices[j], config.edge_clearance):
                candidates.append((i, j))
        if len(candidates) < config.n_edges:
            return None
    while len(candidates) > config.n_edges:
        # Drop the longest edge that does not disconnect the roadmap.
        for key in sorted(candidates, key=lambda e: (-dists[e[0], e[1]], e)):
            trial = [e for e in candidates if e != key]
            if _components(n, trial) == 1:
                candidates = trial
                break
        else:
            return None
    return tuple(sorted(candidates))


def generate_benchmark(config: BenchmarkConfig | None = None, seed: int = 0) -> Scenario:
    """Generate one validated benchmark scenario; deterministic per seed."""
    config = config or BenchmarkConfig()
    for attempt in range(MAX_ATTEMPTS):
        rng = np.random.default_rng(np.random.SeedSequence([seed, attempt]))
        obstacles = _place_obstacles(rng, config)
        if obstacles is None:
            continue
        env = Environment(config.workspace, obstacles)
        vertices = _sample_free_points(
            rng, env, config.n_vertices, config.vertex_clearance, config.vertex_min_separation
        )
        if vertices is None:
            continue
        edges = _build_roadmap(rng, env, vertices, config)
        if edges is None:
            continue
        graph = InformativeGraph(vertices, edges)
        pairs = []
        for s in range(config.n_vertices):
            gd = goal_distances(graph, s)
            for g in range(config.n_vertices):
                if g == s:
                    continue
                sep = float(np.linalg.norm(vertices[s] - vertices[g]))
                if sep >= config.min_separation and gd[g] <= config.budget:
                    pairs.append((s, g))
        if not pairs:
            continue
        s, g = pairs[int(rng.integers(len(pairs)))]
        tp = _sample_free_points(rng, env, config.m_test, 0.0, 0.0)
        if tp is None:
            continue
        scenario = Scenario(
            environment=env,
            graph=graph,
            kernel=config.kernel,
            budget=config.budget,
            start=int(s),
            goal=int(g),
            n_measurements=config.n_measurements,
            test_points=tp,
        )
        # Round-trip through the schema validator so generated scenarios obey
        # exactly the same invariants as loaded ones.
        return scenario_from_dict(scenario_to_dict(scenario))
    raise GenerationError(f"benchmark generation failed after {MAX_ATTEMPTS} attempts (seed {seed})")
