import math

import numpy as np
import pytest

from ipplan.errors import ValidationError
from ipplan.geometry import (
    ConvexPolygon,
    Disk,
    Ellipse,
    Environment,
    ObstacleSet,
    arc_length,
    ellipse_contains,
    influence_region_contains,
    min_focal_sum,
    obstacle_from_dict,
    prune_obstacles,
    signed_distance,
    signed_distances,
    workspace_signed_distance,
    workspace_signed_distances,
)
from ipplan.oracles import min_focal_sum_sampling

UNIT_SQUARE = ConvexPolygon(np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]))


def test_arc_length_straight_segment():
    pts = np.linspace([0.0, 0.0], [3.0, 4.0], 17)
    assert arc_length(pts) == pytest.approx(5.0, rel=1e-12)


def test_arc_length_unit_circle():
    t = np.linspace(0, 2 * math.pi, 1025)
    pts = np.column_stack([np.cos(t), np.sin(t)])
    assert arc_length(pts) == pytest.approx(2 * math.pi, abs=1e-4)


def test_arc_length_repeated_point():
    assert arc_length(np.array([[1.0, 1.0], [1.0, 1.0]])) == 0.0


def test_arc_length_needs_two_points():
    with pytest.raises(ValidationError):
        arc_length(np.array([[1.0, 1.0]]))


def test_ellipse_rejects_short_axis():
    with pytest.raises(ValidationError):
        Ellipse(np.array([0.0, 0.0]), np.array([2.0, 0.0]), 1.0)


def test_ellipse_contains_midpoint_and_focus():
    e = Ellipse(np.array([0.0, 0.0]), np.array([2.0, 0.0]), 3.0)
    assert ellipse_contains(e, [1.0, 0.0])
    assert ellipse_contains(e, [0.0, 0.0])


def test_ellipse_boundary_point_on_major_axis():
    u, v = np.array([0.0, 0.0]), np.array([2.0, 0.0])
    L = 3.0
    x = v + np.array([(L - 2.0) / 2, 0.0])
    e = Ellipse(u, v, L)
    assert ellipse_contains(e, x)
    assert not ellipse_contains(e, x + np.array([1e-9, 0.0]))


def test_influence_region_inside_for_any_radius():
    e = Ellipse(np.array([0.0, 0.0]), np.array([2.0, 0.0]), 2.5)
    assert influence_region_contains(e, 0.0, [1.0, 0.3])
    assert influence_region_contains(e, 5.0, [1.0, 0.3])


def test_influence_region_zero_radius_reduces_to_ellipse():
    rng = np.random.default_rng(2)
    e = Ellipse(np.array([0.0, 0.0]), np.array([2.0, 0.0]), 2.6)
    for _ in range(200):
        x = rng.random(2) * 4 - 1
        assert influence_region_contains(e, 0.0, x) == ellipse_contains(e, x)


def test_influence_region_degenerate_segment():
    u, v = np.array([0.0, 0.0]), np.array([2.0, 0.0])
    e = Ellipse(u, v, 2.0)
    r = 0.3
    assert influence_region_contains(e, r, [1.0, 0.29])
    assert not influence_region_contains(e, r, [1.0, 0.31])
    assert influence_region_contains(e, r, [-0.29, 0.0])
    assert not influence_region_contains(e, r, [-0.31, 0.0])


def test_influence_region_matches_true_minkowski_distance():
    # Points just inside/outside the exact distance-r offset of the ellipse.
    u, v = np.array([0.0, 0.0]), np.array([2.0, 0.0])
    L = 2.5
    e = Ellipse(u, v, L)
    a, b = L / 2, math.sqrt((L / 2) ** 2 - 1.0)
    r = 0.4
    top = np.array([1.0, b + r])
    assert influence_region_contains(e, r, top - [0, 1e-9])
    assert not influence_region_contains(e, r, top + [0, 1e-9])


def test_signed_distance_disk():
    d = Disk(np.array([1.0, 1.0]), 0.5)
    assert signed_distance([1.0, 1.0], d) == pytest.approx(-0.5)
    assert signed_distance([2.0, 1.0], d) == pytest.approx(0.5)
    assert abs(signed_distance([1.5, 1.0], d)) < 1e-12


def test_signed_distance_square():
    assert signed_distance([2.0, 0.5], UNIT_SQUARE) == pytest.approx(1.0, rel=1e-12)
    assert signed_distance([0.5, 0.5], UNIT_SQUARE) == pytest.approx(-0.5, rel=1e-12)
    assert abs(signed_distance([1.0, 0.5], UNIT_SQUARE)) < 1e-12
    # Corner region: Euclidean distance to the vertex.
    assert signed_distance([2.0, 2.0], UNIT_SQUARE) == pytest.approx(math.sqrt(2), rel=1e-12)


def test_signed_distances_batch_matches_scalar():
    rng = np.random.default_rng(3)
    pts = rng.random((50, 2)) * 3 - 0.5
    for obs in (UNIT_SQUARE, Disk(np.array([0.5, 0.5]), 0.4)):
        batch = signed_distances(pts, obs)
        for p, d in zip(pts, batch):
            assert d == pytest.approx(signed_distance(p, obs), rel=1e-12, abs=1e-12)


def test_obstacle_set_matches_individuals():
    rng = np.random.default_rng(4)
    obstacles = [
        Disk(np.array([0.5, 0.5]), 0.3),
        UNIT_SQUARE,
        ConvexPolygon(np.array([[2.0, 2.0], [3.0, 2.2], [2.5, 3.0]])),
        Disk(np.array([2.5, 0.5]), 0.2),
    ]
    oset = ObstacleSet(obstacles)
    pts = rng.random((40, 2)) * 3.5
    D = oset.distances(pts)
    for j, obs in enumerate(obstacles):
        assert np.allclose(D[:, j], signed_distances(pts, obs))
    assert oset.min_distance(pts) == pytest.approx(float(D.min()))
    assert np.allclose(oset.min_per_obstacle(pts), D.min(axis=0))


def test_polygon_validation():
    with pytest.raises(ValidationError):
        ConvexPolygon(np.array([[0.0, 0.0], [1.0, 0.0]]))
    with pytest.raises(ValidationError):  # clockwise
        ConvexPolygon(np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0]]))
    with pytest.raises(ValidationError):  # collinear vertex
        ConvexPolygon(np.array([[0.0, 0.0], [0.5, 0.0], [1.0, 0.0], [0.5, 1.0]]))


def test_workspace_signed_distance():
    ws = (0.0, 0.0, 4.0, 2.0)
    assert workspace_signed_distance([2.0, 1.0], ws) == pytest.approx(1.0)
    assert workspace_signed_distance([0.0, 0.0], ws) == 0.0
    assert workspace_signed_distance([4.5, 1.0], ws) == pytest.approx(-0.5)
    assert workspace_signed_distance([5.0, 3.0], ws) == pytest.approx(-math.hypot(1.0, 1.0))
    pts = np.array([[2.0, 1.0], [0.0, 0.0], [4.5, 1.0]])
    batch = workspace_signed_distances(pts, ws)
    assert np.allclose(batch, [1.0, 0.0, -0.5])


def test_min_focal_sum_intersecting_segment():
    d = Disk(np.array([1.0, 0.0]), 0.3)
    u, v = np.array([0.0, 0.0]), np.array([2.0, 0.0])
    assert min_focal_sum(d, u, v) == pytest.approx(2.0)


def test_min_focal_sum_contains_focus():
    poly = UNIT_SQUARE
    u = np.array([0.5, 0.5])
    v = np.array([5.0, 5.0])
    assert min_focal_sum(poly, u, v) == pytest.approx(np.linalg.norm(u - v))


def test_min_focal_sum_far_disk_vs_sampling_oracle():
    d = Disk(np.array([3.0, 4.0]), 0.5)
    u, v = np.array([0.0, 0.0]), np.array([2.0, 0.0])
    fast = min_focal_sum(d, u, v, tol=1e-6)
    slow = min_focal_sum_sampling(d, u, v, n_samples=1_000_000, seed=1)
    # The sampling oracle over-estimates slightly; ours must sit at or below
    # it and not be more than the sampling slack under it.
    assert fast <= slow + 1e-6
    assert fast >= slow - 5e-3


def test_min_focal_sum_polygon_vs_sampling_oracle():
    poly = ConvexPolygon(np.array([[2.5, 2.0], [3.4, 2.3], [3.0, 3.2]]))
    u, v = np.array([0.0, 0.0]), np.array([1.5, 0.2])
    fast = min_focal_sum(poly, u, v, tol=1e-6)
    slow = min_focal_sum_sampling(poly, u, v, n_samples=1_000_000, seed=2)
    assert fast <= slow + 1e-6
    assert fast >= slow - 5e-3


def test_prune_obstacles_examples():
    env = Environment(
        (0.0, 0.0, 6.0, 6.0),
        (
            Disk(np.array([5.5, 5.5]), 0.4),  # far away
            Disk(np.array([1.0, 1.0]), 0.3),  # overlaps the segment
        ),
    )
    u, v = np.array([0.5, 1.0]), np.array([2.0, 1.0])
    kept = prune_obstacles(env, u, v, 1.6, safety_margin=1e-3)
    assert len(kept) == 1
    assert isinstance(kept[0], Disk) and kept[0].radius == 0.3
    # The overlapping obstacle survives any budget.
    for L in (1.5, 3.0, 8.0):
        kept = prune_obstacles(env, u, v, L, safety_margin=1e-3)
        assert any(o.radius == 0.3 for o in kept)


def test_prune_safety_against_dense_sampling():
    # No pruned obstacle may contain a point with focal sum within the budget.
    rng = np.random.default_rng(9)
    for trial in range(20):
        center = rng.random(2) * 4
        obs = Disk(center, 0.2 + 0.3 * rng.random())
        env = Environment((-2.0, -2.0, 6.0, 6.0), (obs,))
        u = rng.random(2) * 4
        v = rng.random(2) * 4
        L = float(np.linalg.norm(u - v)) * (1 + rng.random())
        kept = prune_obstacles(env, u, v, L, safety_margin=1e-6)
        if kept:
            continue
        angles = rng.random(4000) * 2 * math.pi
        radii = obs.radius * np.sqrt(rng.random(4000))
        pts = center + np.column_stack([radii * np.cos(angles), radii * np.sin(angles)])
        sums = np.linalg.norm(pts - u, axis=1) + np.linalg.norm(pts - v, axis=1)
        assert sums.min() > L, f"trial {trial}: pruned an intersecting obstacle"


def test_lemma1_arc_length_bounds():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        n = int(rng.integers(2, 9))
        pts = rng.random((n, 2)) * 3
        total = arc_length(pts)
        assert np.linalg.norm(pts[-1] - pts[0]) <= total + 1e-9
        for k in range(n):
            focal = np.linalg.norm(pts[k] - pts[0]) + np.linalg.norm(pts[-1] - pts[k])
            assert focal <= total + 1e-9


def test_lemma2_elliptical_containment():
    rng = np.random.default_rng(2)
    for _ in range(1000):
        n = int(rng.integers(2, 9))
        pts = rng.random((n, 2)) * 3
        e = Ellipse(pts[0], pts[-1], arc_length(pts))
        for k in range(n):
            assert ellipse_contains(e, pts[k])


def test_signed_distance_lipschitz():
    rng = np.random.default_rng(8)
    obstacles = [UNIT_SQUARE, Disk(np.array([0.3, 0.7]), 0.45)]
    for _ in range(500):
        a = rng.random(2) * 4 - 1
        b = rng.random(2) * 4 - 1
        for obs in obstacles:
            da, db = signed_distance(a, obs), signed_distance(b, obs)
            assert abs(da - db) <= np.linalg.norm(a - b) + 1e-12


def test_environment_validation():
    with pytest.raises(ValidationError):
        Environment((0.0, 0.0, 1.0, 1.0), (Disk(np.array([5.0, 5.0]), 0.5),))
    with pytest.raises(ValidationError):
        Environment((0.0, 0.0, 1.0, 1.0), (Disk(np.array([0.5, 0.5]), 5.0),))


def test_obstacle_serialization_round_trip():
    d = Disk(np.array([1.5, 2.5]), 0.75)
    d2 = obstacle_from_dict(d.to_dict())
    assert np.array_equal(d2.center, d.center) and d2.radius == d.radius
    p2 = obstacle_from_dict(UNIT_SQUARE.to_dict())
    assert np.array_equal(p2.vertices, UNIT_SQUARE.vertices)
    with pytest.raises(ValidationError):
        obstacle_from_dict({"sphere": {}})
