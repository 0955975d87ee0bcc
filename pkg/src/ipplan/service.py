"""HTTP service exposing the planning pipeline.

The service is stateless: every request carries its scenario inline (grid
references may be inline objects or paths visible to the server process).
Artifacts come back in the response body so clients own all file I/O.
"""

from __future__ import annotations

import dataclasses

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import __version__
from .benchgen import BenchmarkConfig, generate_benchmark
from .config import Settings, settings_from_dict
from .errors import (
    GenerationError,
    InfeasibleError,
    NumericalError,
    PlanningError,
    ValidationError,
)
from .gp import KernelParams, MeasurementSet, TestSet
from .graph import enumerate_feasible_paths
from .oracles import dense_posterior_trace, grid_search_allocation
from .pipeline import (
    PLANNERS,
    build_artifacts,
    compare,
    plan_scenario,
    _grid_interpolate,
)
from .render import render_svg
from .scenario import scenario_from_dict, scenario_to_dict

app = FastAPI(title="ipplan", version=__version__)


class PlanRequest(BaseModel):
    scenario: dict
    planner: str = "hier"
    seed: int = 0
    threads: int = 1
    budget: float | None = None
    config: dict = Field(default_factory=dict)


class PlanResponse(BaseModel):
    report: dict
    artifacts: dict[str, str]


class AllocateRequest(BaseModel):
    scenario: dict
    seed: int = 0
    config: dict = Field(default_factory=dict)


class RefineRequest(BaseModel):
    scenario: dict
    edge: list[int]  # [i, j] vertex indices
    allocated_length: float
    seed: int = 0
    config: dict = Field(default_factory=dict)


class EvalRequest(BaseModel):
    scenario: dict
    measurements: list[list[float]]  # [[x, y], ...]


class GenBenchRequest(BaseModel):
    seed: int = 0
    overrides: dict = Field(default_factory=dict)


class CompareRequest(BaseModel):
    scenarios: list[dict]
    planners: list[str] = Field(default_factory=lambda: list(PLANNERS))
    seeds: list[int] = Field(default_factory=lambda: [0])
    threads: int = 1
    config: dict = Field(default_factory=dict)


class OracleRequest(BaseModel):
    scenario: dict
    cap: int = 100000
    measurements: list[list[float]] | None = None
    path: list[int] | None = None
    resolution: float = 0.01


ERROR_STATUS = {
    ValidationError: 422,
    InfeasibleError: 409,
    NumericalError: 500,
    GenerationError: 500,
}


@app.exception_handler(PlanningError)
async def planning_error_handler(request: Request, exc: PlanningError):
    status = 500
    kind = "error"
    for cls, code in ERROR_STATUS.items():
        if isinstance(exc, cls):
            status = code
            kind = cls.__name__
            break
    return JSONResponse(
        status_code=status, content={"error_kind": kind, "detail": str(exc)}
    )


def _settings(config: dict) -> Settings:
    return settings_from_dict(config) if config else Settings()


@app.get("/health")
def health():
    return {"status": "ok", "version": __version__}


@app.post("/plan", response_model=PlanResponse)
def plan(req: PlanRequest):
    scenario = scenario_from_dict(req.scenario)
    settings = _settings(req.config)
    report, traj, T, used_scenario = plan_scenario(
        scenario,
        planner=req.planner,
        seed=req.seed,
        settings=settings,
        threads=req.threads,
        budget_override=req.budget,
    )
    artifacts = build_artifacts(used_scenario, T, traj, report, settings)
    return PlanResponse(report=dataclasses.asdict(report), artifacts=artifacts)


@app.post("/allocate")
def allocate(req: AllocateRequest):
    from dataclasses import replace

    from .allocation import AllocationProblem, solve_allocation
    from .gp import kernel_influence_radius
    from .graph import plan_graph_path

    scenario = scenario_from_dict(req.scenario)
    settings = _settings(req.config)
    T = scenario.test_set()
    path, graph_obj = plan_graph_path(
        scenario.graph, scenario.start, scenario.goal, scenario.budget, T, scenario.kernel
    )
    verts = scenario.graph.vertices
    problem = AllocationProblem(
        verts[list(path.vertices[:-1])],
        verts[list(path.vertices[1:])],
        T.points,
        scenario.budget,
        kernel_influence_radius(scenario.kernel),
        settings.alpha_for(scenario.kernel.lengthscale),
    )
    alloc = solve_allocation(problem, replace(settings.allocation, seed=req.seed))
    return {
        "graph_path": list(path.vertices),
        "graph_objective": graph_obj,
        "coverage": alloc.coverage,
        "allocations": [
            {
                "edge": [int(a), int(b)],
                "geometric_len": float(problem.lengths[e]),
                "allocated_len": float(alloc.lengths[e]),
            }
            for e, (a, b) in enumerate(zip(path.vertices, path.vertices[1:]))
        ],
    }


@app.post("/refine")
def refine(req: RefineRequest):
    from dataclasses import replace as dc_replace

    from .refine import refine_segment, segment_arc_length

    scenario = scenario_from_dict(req.scenario)
    settings = _settings(req.config)
    i, j = int(req.edge[0]), int(req.edge[1])
    if (min(i, j), max(i, j)) not in set(scenario.graph.edges):
        raise ValidationError(f"({i},{j}) is not an edge of the scenario graph")
    T = scenario.test_set()
    verts = scenario.graph.vertices
    seg, diags = refine_segment(
        verts[i], verts[j], float(req.allocated_length), T, scenario.environment,
        scenario.kernel, settings.refine, seed=req.seed,
    )
    return {
        "control_points": [[float(x), float(y)] for x, y in seg.control_points],
        "degree": seg.degree,
        "arc_length": segment_arc_length(seg, settings.refine.m_quad),
        "diagnostics": {k: v for k, v in diags.items()},
    }


@app.post("/eval")
def evaluate(req: EvalRequest):
    import numpy as np

    from .gp import FieldGrid, posterior_cov_trace, posterior_mean, weighted_rmse

    scenario = scenario_from_dict(req.scenario)
    T = scenario.test_set()
    pts = np.asarray(req.measurements, dtype=float)
    if pts.size == 0:
        raise ValidationError("measurements must be nonempty")
    objective = posterior_cov_trace(T, MeasurementSet(pts), scenario.kernel)
    out = {"objective": float(objective), "n_measurements": int(pts.shape[0])}
    if scenario.truth_grid is not None and scenario.importance_grid is not None:
        truth = scenario.truth_grid
        y = _grid_interpolate(truth, pts)
        X = MeasurementSet(pts, y)
        mu = posterior_mean(truth.cell_centers(), X, scenario.kernel)
        mean_grid = FieldGrid(truth.extent, mu.reshape(truth.ny, truth.nx), "truth")
        out["weighted_rmse"] = float(weighted_rmse(mean_grid, truth, scenario.importance_grid))
    return out


@app.post("/bench/generate")
def gen_bench(req: GenBenchRequest):
    import dataclasses as dc

    config = BenchmarkConfig()
    if req.overrides:
        known = {f.name for f in dc.fields(BenchmarkConfig)}
        unknown = set(req.overrides) - known
        if unknown:
            raise ValidationError(f"unknown benchmark overrides: {sorted(unknown)}")
        overrides = dict(req.overrides)
        if "kernel" in overrides:
            overrides["kernel"] = KernelParams(**overrides["kernel"])
        if "workspace" in overrides:
            overrides["workspace"] = tuple(overrides["workspace"])
        config = dc.replace(config, **overrides)
    scenario = generate_benchmark(config, seed=req.seed)
    return {"scenario": scenario_to_dict(scenario)}


@app.post("/compare")
def compare_endpoint(req: CompareRequest):
    scenarios = [scenario_from_dict(d) for d in req.scenarios]
    settings = _settings(req.config)
    result = compare(scenarios, req.planners, req.seeds, settings=settings, threads=req.threads)
    return result


@app.post("/oracle/dense-trace")
def oracle_dense_trace(req: OracleRequest):
    import numpy as np

    scenario = scenario_from_dict(req.scenario)
    if req.measurements is None:
        raise ValidationError("dense-trace oracle needs measurements")
    T = scenario.test_set()
    X = MeasurementSet(np.asarray(req.measurements, dtype=float))
    return {"objective": dense_posterior_trace(T, X, scenario.kernel)}


@app.post("/oracle/enumerate")
def oracle_enumerate(req: OracleRequest):
    from .gp import posterior_cov_trace

    scenario = scenario_from_dict(req.scenario)
    T = scenario.test_set()
    paths = enumerate_feasible_paths(
        scenario.graph, scenario.start, scenario.goal, scenario.budget, cap=req.cap
    )
    out = []
    for p in paths:
        pts = scenario.graph.vertices[sorted(set(p.vertices))]
        obj = posterior_cov_trace(T, MeasurementSet(pts), scenario.kernel)
        out.append(
            {"vertices": list(p.vertices), "length": p.total_length, "objective": obj}
        )
    return {"paths": out}


@app.post("/oracle/grid-alloc")
def oracle_grid_alloc(req: OracleRequest):
    from .allocation import AllocationProblem
    from .gp import kernel_influence_radius
    from .graph import GraphPath, plan_graph_path

    scenario = scenario_from_dict(req.scenario)
    T = scenario.test_set()
    if req.path is not None:
        path = GraphPath.from_sequence(scenario.graph, req.path)
    else:
        path, _ = plan_graph_path(
            scenario.graph, scenario.start, scenario.goal, scenario.budget, T, scenario.kernel
        )
    verts = scenario.graph.vertices
    settings = Settings()
    problem = AllocationProblem(
        verts[list(path.vertices[:-1])],
        verts[list(path.vertices[1:])],
        T.points,
        scenario.budget,
        kernel_influence_radius(scenario.kernel),
        settings.alpha_for(scenario.kernel.lengthscale),
    )
    L, f = grid_search_allocation(problem, resolution=req.resolution)
    return {
        "graph_path": list(path.vertices),
        "lengths": [float(v) for v in L],
        "coverage": float(f),
    }
