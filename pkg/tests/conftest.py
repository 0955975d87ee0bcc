import numpy as np
import pytest

from ipplan.geometry import ConvexPolygon, Disk, Environment
from ipplan.gp import KernelParams, TestSet
from ipplan.graph import InformativeGraph
from ipplan.scenario import Scenario


@pytest.fixture
def bench_kernel():
    return KernelParams(0.35, 10.0, 0.1)


def random_polyline(rng, n_min=3, n_max=10, box=3.0):
    n = int(rng.integers(n_min, n_max + 1))
    return rng.random((n, 2)) * box


def make_scenario(
    workspace=(0.0, 0.0, 4.0, 4.0),
    obstacles=(),
    vertices=None,
    edges=None,
    kernel=None,
    budget=10.0,
    start=0,
    goal=None,
    test_points=None,
    n_measurements=20,
):
    """Small hand-built scenario for pipeline-level tests."""
    if vertices is None:
        vertices = np.array([[0.5, 0.5], [2.0, 0.6], [3.5, 0.5], [2.0, 2.0], [0.5, 3.5], [3.5, 3.5]])
        edges = ((0, 1), (1, 2), (1, 3), (3, 4), (3, 5), (2, 5), (0, 4), (4, 5))
    if goal is None:
        goal = len(vertices) - 1
    if test_points is None:
        test_points = np.array([[1.0, 1.5], [2.5, 2.5], [3.0, 1.0], [1.5, 3.0]])
    return Scenario(
        environment=Environment(workspace, tuple(obstacles)),
        graph=InformativeGraph(np.asarray(vertices, dtype=float), tuple(edges)),
        kernel=kernel or KernelParams(0.35, 10.0, 0.1),
        budget=budget,
        start=start,
        goal=goal,
        n_measurements=n_measurements,
        test_points=np.asarray(test_points, dtype=float),
    )
