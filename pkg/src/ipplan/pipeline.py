"""Pipeline orchestration: run a planner on a scenario, emit artifacts,
aggregate benchmark comparisons.

Artifacts are computed fully in memory and written only on success, so a
failing stage leaves no partial output. plan.json is bit-deterministic for a
fixed (scenario, planner, seed) regardless of worker threads; wall-clock
runtimes live in metrics.json only.
"""

from __future__ import annotations

import csv
import io
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .allocation import AllocationConfig, AllocationProblem, solve_allocation
from .baselines import plan_continuous_cmaes, plan_continuous_gradient, plan_graph_only
from .cmaes import CmaesConfig
from .config import Settings, settings_to_dict
from .errors import ValidationError
from .gp import (
    FieldGrid,
    MeasurementSet,
    kernel_influence_radius,
    posterior_cov_trace,
    posterior_mean,
    weighted_rmse,
)
from .graph import plan_graph_path
from .refine import (
    assemble_trajectory,
    distribute_measurements,
    refine_segment,
    trajectory_feasibility,
)
from .render import render_svg
from .scenario import Scenario

PLANNERS = ("hier", "graph", "cmaes", "gradient")

OBJECTIVE_RECHECK_TOL = 1e-9


@dataclass
class PlanReport:
    planner: str
    seed: int
    objective: float
    feasible: bool
    total_length: float
    budget: float
    n_measurements: int
    runtime_seconds: dict
    graph_path: list | None = None
    allocations: list | None = None
    measurement_counts: list | None = None
    weighted_rmse: float | None = None
    rmse_at_test_points: float | None = None
    validator: dict = field(default_factory=dict)
    config_echo: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)


def _segment_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def _grid_interpolate(grid: FieldGrid, points: np.ndarray) -> np.ndarray:
    """Bilinear interpolation of cell-center values, clamped at the rim."""
    xmin, ymin, xmax, ymax = grid.extent
    dx = (xmax - xmin) / grid.nx
    dy = (ymax - ymin) / grid.ny
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    fx = np.clip((pts[:, 0] - xmin) / dx - 0.5, 0.0, grid.nx - 1.0)
    fy = np.clip((pts[:, 1] - ymin) / dy - 0.5, 0.0, grid.ny - 1.0)
    ix = np.minimum(fx.astype(int), grid.nx - 2)
    iy = np.minimum(fy.astype(int), grid.ny - 2)
    tx = fx - ix
    ty = fy - iy
    v = grid.values
    return (
        v[iy, ix] * (1 - tx) * (1 - ty)
        + v[iy, ix + 1] * tx * (1 - ty)
        + v[iy + 1, ix] * (1 - tx) * ty
        + v[iy + 1, ix + 1] * tx * ty
    )


def _plan_hier(scenario: Scenario, T, seed: int, settings: Settings, threads: int):
    timings = {}
    t0 = time.perf_counter()
    path, _ = plan_graph_path(
        scenario.graph, scenario.start, scenario.goal, scenario.budget, T, scenario.kernel
    )
    timings["graph"] = time.perf_counter() - t0

    verts = scenario.graph.vertices
    starts = verts[list(path.vertices[:-1])]
    ends = verts[list(path.vertices[1:])]
    t0 = time.perf_counter()
    r_kernel = kernel_influence_radius(scenario.kernel)
    problem = AllocationProblem(
        starts, ends, T.points, scenario.budget, r_kernel,
        settings.alpha_for(scenario.kernel.lengthscale),
    )
    alloc = solve_allocation(problem, replace(settings.allocation, seed=seed))
    timings["allocation"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    counts = distribute_measurements(alloc.lengths, scenario.n_measurements)

    def refine_one(e):
        cfg = replace(settings.refine, n_measure=counts[e])
        return refine_segment(
            starts[e], ends[e], float(alloc.lengths[e]), T, scenario.environment,
            scenario.kernel, cfg, seed=_segment_seed(seed, e),
        )

    n_seg = len(counts)
    if threads > 1 and n_seg > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(refine_one, range(n_seg)))
    else:
        results = [refine_one(e) for e in range(n_seg)]
    segments = [seg for seg, _ in results]
    timings["refinement"] = time.perf_counter() - t0

    traj = assemble_trajectory(
        segments, alloc.lengths, T, scenario.kernel, scenario.n_measurements
    )
    allocations = [
        {
            "edge": [int(a), int(b)],
            "geometric_len": float(np.linalg.norm(verts[b] - verts[a])),
            "allocated_len": float(alloc.lengths[e]),
        }
        for e, (a, b) in enumerate(zip(path.vertices, path.vertices[1:]))
    ]
    diagnostics = {
        "coverage": alloc.coverage,
        "segments": [d for _, d in results],
    }
    return traj, path, allocations, timings, diagnostics


def plan_scenario(
    scenario: Scenario,
    planner: str = "hier",
    seed: int = 0,
    settings: Settings | None = None,
    threads: int = 1,
    budget_override: float | None = None,
):
    """Run one planner; returns (report, trajectory, test set, scenario used)."""
    if planner not in PLANNERS:
        raise ValidationError(f"unknown planner '{planner}', expected one of {PLANNERS}")
    settings = settings or Settings()
    if budget_override is not None:
        scenario = replace(scenario, budget=float(budget_override))
        shortest = scenario.shortest_path_length()
        if scenario.budget < shortest - 1e-9:
            raise ValidationError(
                f"budget override {scenario.budget} below shortest path {shortest}"
            )
    T = scenario.test_set()

    total_t0 = time.perf_counter()
    timings: dict = {}
    path = None
    allocations = None
    diagnostics: dict = {}
    if planner == "hier":
        traj, path, allocations, timings, diagnostics = _plan_hier(
            scenario, T, seed, settings, threads
        )
    elif planner == "graph":
        t0 = time.perf_counter()
        traj, path, diagnostics = plan_graph_only(scenario, T)
        timings["graph"] = time.perf_counter() - t0
    elif planner == "cmaes":
        t0 = time.perf_counter()
        cfg = replace(settings.cmaes, seed=seed)
        traj, _, diagnostics = plan_continuous_cmaes(scenario, cfg, T)
        timings["optimize"] = time.perf_counter() - t0
    else:
        t0 = time.perf_counter()
        traj, _, diagnostics = plan_continuous_gradient(scenario, settings.refine, seed, T)
        timings["optimize"] = time.perf_counter() - t0

    validator = trajectory_feasibility(
        traj.segments, scenario.environment, scenario.budget, settings.refine.delta_safe
    )
    # Reported objective is always recomputed from the emitted measurements.
    objective = posterior_cov_trace(T, MeasurementSet(traj.measurements), scenario.kernel)
    if abs(objective - traj.objective) > OBJECTIVE_RECHECK_TOL:
        raise ValidationError("stage objective disagrees with the validator recomputation")

    rmse_w = None
    rmse_t = None
    if scenario.truth_grid is not None and scenario.importance_grid is not None:
        truth = scenario.truth_grid
        y = _grid_interpolate(truth, traj.measurements)
        X = MeasurementSet(traj.measurements, y)
        centers = truth.cell_centers()
        mu = posterior_mean(centers, X, scenario.kernel)
        mean_grid = FieldGrid(truth.extent, mu.reshape(truth.ny, truth.nx), "truth")
        rmse_w = weighted_rmse(mean_grid, truth, scenario.importance_grid)
        mu_t = posterior_mean(T.points, X, scenario.kernel)
        f_t = _grid_interpolate(truth, T.points)
        rmse_t = float(np.sqrt(np.mean((mu_t - f_t) ** 2)))

    timings["total"] = time.perf_counter() - total_t0
    report = PlanReport(
        planner=planner,
        seed=seed,
        objective=float(objective),
        feasible=bool(validator["feasible"]),
        total_length=float(traj.total_length),
        budget=float(scenario.budget),
        n_measurements=int(traj.n_measurements),
        runtime_seconds={k: float(v) for k, v in timings.items()},
        graph_path=list(path.vertices) if path is not None else None,
        allocations=allocations,
        measurement_counts=list(traj.measurement_counts),
        weighted_rmse=rmse_w,
        rmse_at_test_points=rmse_t,
        validator=validator,
        config_echo=settings_to_dict(settings),
        diagnostics=diagnostics,
    )
    return report, traj, T, scenario


def run_pipeline(
    scenario: Scenario,
    planner: str = "hier",
    seed: int = 0,
    out_dir=None,
    settings: Settings | None = None,
    threads: int = 1,
    budget_override: float | None = None,
) -> PlanReport:
    """Run one planner end to end; write artifacts when out_dir is given."""
    settings = settings or Settings()
    report, traj, T, used_scenario = plan_scenario(
        scenario, planner, seed, settings, threads, budget_override
    )
    if out_dir is not None:
        artifacts = build_artifacts(used_scenario, T, traj, report, settings)
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name, content in artifacts.items():
            (out / name).write_text(content)
    return report


def plan_json_dict(report: PlanReport, traj) -> dict:
    """The deterministic part of a report (no wall-clock times)."""
    return {
        "schema_version": 1,
        "planner": report.planner,
        "seed": report.seed,
        "budget": report.budget,
        "feasible": report.feasible,
        "objective": report.objective,
        "total_length": report.total_length,
        "n_measurements": report.n_measurements,
        "graph_path": report.graph_path,
        "allocations": report.allocations,
        "measurement_counts": report.measurement_counts,
        "segments": [
            {
                "degree": int(seg.degree),
                "control_points": [[float(x), float(y)] for x, y in seg.control_points],
            }
            for seg in traj.segments
        ],
        "weighted_rmse": report.weighted_rmse,
        "rmse_at_test_points": report.rmse_at_test_points,
        "validator": {
            "feasible": report.validator["feasible"],
            "total_length": report.validator["total_length"],
            "min_obstacle_distance": report.validator["min_obstacle_distance"],
            "min_workspace_distance": report.validator["min_workspace_distance"],
        },
        "config": report.config_echo,
    }


def trajectory_csv(traj, dense_samples: int = 64) -> str:
    from .refine import sample_segment

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["segment_index", "t", "x", "y", "is_measurement"])
    rows = []
    for si, seg in enumerate(traj.segments):
        ts = np.linspace(0.0, 1.0, dense_samples)
        pts = sample_segment(seg, dense_samples)
        for t, p in zip(ts, pts):
            rows.append((si, float(t), 0, float(p[0]), float(p[1])))
    for (si, t), p in zip(traj.measurement_params, traj.measurements):
        rows.append((si, float(t), 1, float(p[0]), float(p[1])))
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    for si, t, is_meas, x, y in rows:
        writer.writerow([si, repr(t), repr(x), repr(y), is_meas])
    return buf.getvalue()


def measurements_csv(traj, values=None) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["segment_index", "t", "x", "y", "value"])
    for k, ((si, t), p) in enumerate(zip(traj.measurement_params, traj.measurements)):
        val = repr(float(values[k])) if values is not None else ""
        writer.writerow([si, repr(float(t)), repr(float(p[0])), repr(float(p[1])), val])
    return buf.getvalue()


def build_artifacts(scenario, T, traj, report, settings) -> dict:
    """All artifact files as name -> content strings."""
    values = None
    if scenario.truth_grid is not None:
        values = _grid_interpolate(scenario.truth_grid, traj.measurements)
    ellipses = None
    if report.allocations:
        r_kernel = kernel_influence_radius(scenario.kernel)
        verts = scenario.graph.vertices
        ellipses = [
            (verts[a["edge"][0]], verts[a["edge"][1]], a["allocated_len"] + 2 * r_kernel)
            for a in report.allocations
        ]
    return {
        "plan.json": json.dumps(plan_json_dict(report, traj), indent=2) + "\n",
        "trajectory.csv": trajectory_csv(traj, settings.trajectory_samples),
        "measurements.csv": measurements_csv(traj, values),
        "metrics.json": json.dumps(
            {
                "planner": report.planner,
                "seed": report.seed,
                "objective": report.objective,
                "feasible": report.feasible,
                "total_length": report.total_length,
                "weighted_rmse": report.weighted_rmse,
                "rmse_at_test_points": report.rmse_at_test_points,
                "runtime_seconds": report.runtime_seconds,
            },
            indent=2,
        )
        + "\n",
        "plot.svg": render_svg(
            scenario, traj, T.points, traj.measurements, allocation_ellipses=ellipses
        ),
    }


def evaluate_trajectory_csv(scenario: Scenario, csv_path) -> dict:
    """Recompute the objective (and RMSE when grids exist) from an artifact.

    This is the audit path: it uses only the measurement rows of
    trajectory.csv plus the scenario, independent of any planner state.
    """
    T = scenario.test_set()
    pts = []
    with open(csv_path) as f:
        reader = csv.DictReader(f)
        for row in reader:
            if row["is_measurement"] == "1":
                pts.append((float(row["x"]), float(row["y"])))
    if not pts:
        raise ValidationError("trajectory.csv contains no measurement rows")
    measurements = np.asarray(pts)
    objective = posterior_cov_trace(T, MeasurementSet(measurements), scenario.kernel)
    out = {"objective": float(objective), "n_measurements": len(pts)}
    if scenario.truth_grid is not None and scenario.importance_grid is not None:
        truth = scenario.truth_grid
        y = _grid_interpolate(truth, measurements)
        X = MeasurementSet(measurements, y)
        mu = posterior_mean(truth.cell_centers(), X, scenario.kernel)
        mean_grid = FieldGrid(truth.extent, mu.reshape(truth.ny, truth.nx), "truth")
        out["weighted_rmse"] = weighted_rmse(mean_grid, truth, scenario.importance_grid)
    return out


def compare(scenarios, planners, seeds, out_dir=None, settings: Settings | None = None,
            threads: int = 1) -> dict:
    """Run a planner grid over scenarios and aggregate the results."""
    settings = settings or Settings()
    rows = []
    for si, scenario in enumerate(scenarios):
        for planner in planners:
            for seed in seeds:
                report = run_pipeline(
                    scenario, planner, seed, settings=settings, threads=threads
                )
                rows.append(
                    {
                        "scenario": si,
                        "planner": planner,
                        "seed": seed,
                        "objective": report.objective,
                        "runtime": report.runtime_seconds["total"],
                        "feasible": report.feasible,
                        "total_length": report.total_length,
                    }
                )
    summary = {}
    for planner in planners:
        objs = np.array([r["objective"] for r in rows if r["planner"] == planner])
        times = np.array([r["runtime"] for r in rows if r["planner"] == planner])
        summary[planner] = {
            "mean_objective": float(objs.mean()),
            "median_objective": float(np.median(objs)),
            "std_objective": float(objs.std()),
            "mean_runtime": float(times.mean()),
            "median_runtime": float(np.median(times)),
            "std_runtime": float(times.std()),
            "feasible_fraction": float(
                np.mean([r["feasible"] for r in rows if r["planner"] == planner])
            ),
        }
    win_rate = {}
    instances = sorted({(r["scenario"], r["seed"]) for r in rows})
    by_key = {(r["scenario"], r["seed"], r["planner"]): r["objective"] for r in rows}
    for a in planners:
        win_rate[a] = {}
        for b in planners:
            wins = sum(
                1
                for key in instances
                if by_key[(key[0], key[1], a)] < by_key[(key[0], key[1], b)]
            )
            win_rate[a][b] = wins / len(instances)
    result = {"rows": rows, "summary": summary, "win_rate": win_rate}
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "compare.csv").write_text(compare_csv(rows))
        (out_dir / "compare.md").write_text(markdown_table(planners, summary, win_rate))
    return result


def compare_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        ["scenario", "planner", "seed", "objective", "runtime", "feasible", "total_length"]
    )
    for r in rows:
        writer.writerow(
            [
                r["scenario"],
                r["planner"],
                r["seed"],
                repr(r["objective"]),
                repr(r["runtime"]),
                int(r["feasible"]),
                repr(r["total_length"]),
            ]
        )
    return buf.getvalue()


def markdown_table(planners, summary, win_rate) -> str:
    lines = [
        "| planner | mean obj | median obj | std obj | mean time (s) | feasible |",
        "|---|---|---|---|---|---|",
    ]
    for p in planners:
        s = summary[p]
        lines.append(
            f"| {p} | {s['mean_objective']:.3f} | {s['median_objective']:.3f} "
            f"| {s['std_objective']:.3f} | {s['mean_runtime']:.2f} | {s['feasible_fraction']:.2f} |"
        )
    lines.append("")
    lines.append("Win rate (row beats column):")
    lines.append("")
    lines.append("| | " + " | ".join(planners) + " |")
    lines.append("|---|" + "---|" * len(planners))
    for a in planners:
        cells = " | ".join(f"{win_rate[a][b]:.2f}" for b in planners)
        lines.append(f"| {a} | {cells} |")
    return "\n".join(lines) + "\n"
