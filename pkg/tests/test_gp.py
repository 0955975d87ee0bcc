import json
import math

import numpy as np
import pytest

from ipplan.errors import InfeasibleError, NumericalError, ValidationError
from ipplan.geometry import Ellipse, Environment, arc_length, influence_region_contains
from ipplan.gp import (
    FieldGrid,
    KernelParams,
    MeasurementSet,
    TestSet,
    kernel_eval,
    kernel_influence_radius,
    kernel_matrix,
    posterior_cov_trace,
    posterior_cov_trace_batch,
    posterior_mean,
    sample_test_points,
    weighted_rmse,
)
from ipplan.oracles import dense_posterior_mean, dense_posterior_trace

P = KernelParams(0.35, 10.0, 0.1)


def test_kernel_zero_distance():
    assert kernel_eval([1.0, 2.0], [1.0, 2.0], P) == 10.0


def test_kernel_at_one_lengthscale():
    val = kernel_eval([0.0, 0.0], [0.35, 0.0], P)
    assert val == pytest.approx(10.0 * math.exp(-0.5), rel=1e-9)
    assert val == pytest.approx(6.06531, abs=1e-5)


def test_kernel_symmetry_and_decay():
    a, b = np.array([0.1, 0.2]), np.array([2.3, 1.9])
    assert kernel_eval(a, b, P) == kernel_eval(b, a, P)
    # Beyond a finite distance the kernel is below any positive threshold.
    assert kernel_eval([0.0, 0.0], [100.0, 0.0], P) < 1e-300


def test_kernel_params_validation():
    with pytest.raises(ValidationError):
        KernelParams(0.0, 1.0, 0.1)
    with pytest.raises(ValidationError):
        KernelParams(1.0, -1.0, 0.1)
    with pytest.raises(ValidationError):
        KernelParams(1.0, 1.0, -0.1)
    with pytest.raises(ValidationError):
        KernelParams(1.0, 1.0, 0.1, influence_tolerance=2.0)


def test_kernel_matrix_single_point():
    K = kernel_matrix([[1.0, 1.0]], [[1.0, 1.0]], P)
    assert K.shape == (1, 1)
    assert K[0, 0] == 10.0


def test_kernel_matrix_symmetric_and_psd():
    rng = np.random.default_rng(7)
    A = rng.random((5, 2)) * 3
    K = kernel_matrix(A, A, P)
    assert np.array_equal(K, K.T)
    eigs = np.linalg.eigvalsh(K)
    assert eigs.min() >= -1e-10 * P.signal_variance


def test_kernel_matrix_empty_errors():
    with pytest.raises(ValidationError):
        kernel_matrix(np.zeros((0, 2)), [[0.0, 0.0]], P)


def test_trace_no_measurements():
    T = TestSet(np.random.default_rng(0).random((35, 2)))
    assert posterior_cov_trace(T, MeasurementSet.empty(), P) == 350.0


def test_trace_measurement_at_test_point():
    T = TestSet(np.array([[0.7, 0.7]]))
    X = MeasurementSet(np.array([[0.7, 0.7]]))
    val = posterior_cov_trace(T, X, P)
    assert val == pytest.approx(10.0 - 100.0 / 10.1, rel=1e-12)
    assert val == pytest.approx(0.09901, abs=1e-5)


def test_trace_matches_dense_oracle():
    rng = np.random.default_rng(42)
    for _ in range(20):
        m = int(rng.integers(1, 11))
        n = int(rng.integers(1, 16))
        T = TestSet(rng.random((m, 2)) * 3)
        X = MeasurementSet(rng.random((n, 2)) * 3)
        fast = posterior_cov_trace(T, X, P)
        slow = dense_posterior_trace(T, X, P)
        assert fast == pytest.approx(slow, rel=1e-8)


def test_trace_batch_matches_scalar():
    rng = np.random.default_rng(3)
    T = TestSet(rng.random((6, 2)) * 2)
    batch = rng.random((5, 9, 2)) * 2
    vals = posterior_cov_trace_batch(T, batch, P)
    for b in range(5):
        assert vals[b] == pytest.approx(
            posterior_cov_trace(T, MeasurementSet(batch[b]), P), rel=1e-9
        )


def test_mean_zero_values():
    X = MeasurementSet(np.array([[0.0, 0.0], [1.0, 1.0]]), np.zeros(2))
    out = posterior_mean([[0.5, 0.5]], X, P)
    assert np.allclose(out, 0.0)


def test_mean_interpolates_in_noiseless_limit():
    params = KernelParams(0.35, 10.0, 0.0)
    X = MeasurementSet(np.array([[1.0, 1.0]]), np.array([2.5]))
    out = posterior_mean([[1.0, 1.0]], X, params)
    assert out[0] == pytest.approx(2.5, rel=1e-9)


def test_mean_matches_dense_oracle():
    rng = np.random.default_rng(11)
    X = MeasurementSet(rng.random((8, 2)) * 2, rng.normal(size=8))
    T = rng.random((5, 2)) * 2
    assert np.allclose(posterior_mean(T, X, P), dense_posterior_mean(T, X, P), rtol=1e-8)


def test_mean_requires_values():
    with pytest.raises(ValidationError):
        posterior_mean([[0.0, 0.0]], MeasurementSet(np.array([[1.0, 1.0]])), P)


def test_jitter_ladder_recovers_duplicates():
    # Identical points with zero noise are singular without jitter.
    params = KernelParams(0.35, 10.0, 0.0)
    X = MeasurementSet(np.array([[1.0, 1.0], [1.0, 1.0], [1.0, 1.0]]))
    T = TestSet(np.array([[0.5, 0.5]]))
    val = posterior_cov_trace(T, X, params)
    assert 0.0 <= val <= 10.0


def test_numerical_error_carries_jitters():
    err = NumericalError("x", jitters_tried=[0.0, 1e-9])
    assert err.jitters_tried == (0.0, 1e-9)


def test_influence_radius_examples():
    assert kernel_influence_radius(KernelParams(0.35, 10.0, 0.1, 0.1)) == pytest.approx(
        0.35 * math.sqrt(2 * math.log(100)), rel=1e-12
    )
    assert kernel_influence_radius(KernelParams(0.35, 10.0, 0.1, 0.1)) == pytest.approx(
        1.06220, abs=1e-5
    )
    p = KernelParams(2.0, 10.0, 0.1, 10.0 * math.exp(-0.5))
    assert kernel_influence_radius(p) == pytest.approx(2.0, rel=1e-12)
    arctic = KernelParams(1.8, 0.1, 0.01, 0.001)
    assert kernel_influence_radius(arctic) == pytest.approx(5.46272, abs=1e-4)


def test_influence_radius_default_tolerance():
    # Default tolerance is 1% of the prior variance, about 3 lengthscales.
    r = kernel_influence_radius(P)
    assert r == pytest.approx(0.35 * math.sqrt(2 * math.log(100)), rel=1e-12)


def test_variance_monotonicity():
    rng = np.random.default_rng(5)
    m = 8
    T = TestSet(rng.random((m, 2)) * 3)
    for _ in range(25):
        n = int(rng.integers(1, 10))
        X = rng.random((n, 2)) * 3
        extra = rng.random((int(rng.integers(1, 6)), 2)) * 3
        bigger = np.vstack([X, extra])
        t_small = posterior_cov_trace(T, MeasurementSet(X), P)
        t_big = posterior_cov_trace(T, MeasurementSet(bigger), P)
        assert t_big <= t_small + 1e-9 * m * P.signal_variance
        assert 0.0 <= t_big <= m * P.signal_variance


def test_kernel_influence_lemma_property():
    # Points outside the Minkowski-expanded ellipse see kernel values below
    # the tolerance at every curve sample.
    rng = np.random.default_rng(17)
    params = KernelParams(0.35, 10.0, 0.1, 0.1)
    r_kernel = kernel_influence_radius(params)
    for _ in range(50):
        pts = rng.random((5, 2)) * 2.0
        L = arc_length(pts) * (1 + rng.random())
        e = Ellipse(pts[0], pts[-1], L)
        for _ in range(20):
            x = rng.random(2) * 8.0 - 3.0
            if influence_region_contains(e, r_kernel, x):
                continue
            ts = np.linspace(0, 1, 200)
            # Piecewise-linear interpolation along the polyline.
            seg = np.minimum((ts * (len(pts) - 1)).astype(int), len(pts) - 2)
            frac = ts * (len(pts) - 1) - seg
            curve = pts[seg] * (1 - frac[:, None]) + pts[seg + 1] * frac[:, None]
            vals = params.signal_variance * np.exp(
                -np.sum((curve - x) ** 2, axis=1) / (2 * params.lengthscale**2)
            )
            assert np.all(vals < params.epsilon)
            break


def _grid(values, semantics="importance", extent=(0.0, 0.0, 2.0, 1.0)):
    return FieldGrid(extent, np.asarray(values, dtype=float), semantics)


def test_weighted_rmse_zero_when_equal():
    v = np.arange(6.0).reshape(2, 3) + 1
    assert weighted_rmse(_grid(v, "truth"), _grid(v, "truth"), _grid(np.ones((2, 3)))) == 0.0


def test_weighted_rmse_uniform_equals_unweighted():
    rng = np.random.default_rng(0)
    a = rng.random((3, 4))
    b = rng.random((3, 4))
    w = weighted_rmse(
        _grid(a, "truth", (0, 0, 4, 3)),
        _grid(b, "truth", (0, 0, 4, 3)),
        _grid(np.ones((3, 4)), "importance", (0, 0, 4, 3)),
    )
    assert w == pytest.approx(float(np.sqrt(np.mean((a - b) ** 2))), rel=1e-12)


def test_weighted_rmse_point_mass():
    a = np.zeros((2, 2))
    b = np.zeros((2, 2))
    b[1, 0] = 3.0
    imp = np.zeros((2, 2))
    imp[1, 0] = 5.0
    ext = (0, 0, 2, 2)
    assert weighted_rmse(
        _grid(a, "truth", ext), _grid(b, "truth", ext), _grid(imp, "importance", ext)
    ) == pytest.approx(3.0, rel=1e-12)


def test_weighted_rmse_shape_mismatch():
    with pytest.raises(ValidationError):
        weighted_rmse(
            _grid(np.ones((2, 2)), "truth", (0, 0, 1, 1)),
            _grid(np.ones((3, 3)), "truth", (0, 0, 1, 1)),
            _grid(np.ones((2, 2)), "importance", (0, 0, 1, 1)),
        )


def test_field_grid_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    g = FieldGrid((0.0, 0.0, 3.0, 2.0), rng.random((4, 6)), "importance")
    path = tmp_path / "grid.json"
    g.save(path)
    g2 = FieldGrid.load(path)
    assert g2.extent == g.extent
    assert np.array_equal(g2.values, g.values)
    # Bit-exact on the serialized form as well.
    g2.save(tmp_path / "grid2.json")
    assert (tmp_path / "grid.json").read_bytes() == (tmp_path / "grid2.json").read_bytes()


def test_importance_grid_must_have_mass():
    with pytest.raises(ValidationError):
        FieldGrid((0, 0, 1, 1), np.zeros((2, 2)), "importance")


def test_sample_test_points_point_mass():
    vals = np.zeros((4, 4))
    vals[2, 1] = 1.0
    grid = FieldGrid((0.0, 0.0, 4.0, 4.0), vals, "importance")
    env = Environment((0.0, 0.0, 4.0, 4.0), ())
    ts = sample_test_points(grid, env, 12, seed=3)
    # All samples inside the single massive cell.
    assert np.all((ts.points[:, 0] >= 1.0) & (ts.points[:, 0] <= 2.0))
    assert np.all((ts.points[:, 1] >= 2.0) & (ts.points[:, 1] <= 3.0))


def test_sample_test_points_deterministic():
    grid = FieldGrid((0.0, 0.0, 4.0, 4.0), np.ones((8, 8)), "importance")
    env = Environment((0.0, 0.0, 4.0, 4.0), ())
    a = sample_test_points(grid, env, 20, seed=9)
    b = sample_test_points(grid, env, 20, seed=9)
    assert np.array_equal(a.points, b.points)


def test_sample_test_points_uniform_chi2():
    # Uniform importance in an obstacle-free box: cell histogram passes a
    # chi-squared test at p = 0.01.
    from scipy.stats import chi2

    grid = FieldGrid((0.0, 0.0, 4.0, 4.0), np.ones((4, 4)), "importance")
    env = Environment((0.0, 0.0, 4.0, 4.0), ())
    n = 3200
    ts = sample_test_points(grid, env, n, seed=123)
    ix = np.minimum((ts.points[:, 0] / 1.0).astype(int), 3)
    iy = np.minimum((ts.points[:, 1] / 1.0).astype(int), 3)
    counts = np.zeros(16)
    for a, b in zip(ix, iy):
        counts[b * 4 + a] += 1
    expected = n / 16
    stat = float(np.sum((counts - expected) ** 2 / expected))
    assert stat < chi2.ppf(0.99, df=15)


def test_sample_test_points_infeasible():
    from ipplan.geometry import Disk

    vals = np.zeros((4, 4))
    vals[0, 0] = 1.0  # the only massive cell is fully covered by an obstacle
    grid = FieldGrid((0.0, 0.0, 4.0, 4.0), vals, "importance")
    env = Environment((0.0, 0.0, 4.0, 4.0), (Disk(np.array([0.5, 0.5]), 1.2),))
    with pytest.raises(InfeasibleError):
        sample_test_points(grid, env, 5, seed=0)


def test_duplicate_test_points_warn():
    with pytest.warns(UserWarning):
        TestSet(np.array([[1.0, 1.0], [1.0, 1.0]]))
