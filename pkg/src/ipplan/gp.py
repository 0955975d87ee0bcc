"""Gaussian-process machinery for informative path planning.

Squared exponential kernel, posterior covariance trace (the planning
objective), posterior mean, kernel influence radius, grid fields with
importance-weighted error metrics, and importance-driven test point
sampling.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .errors import InfeasibleError, NumericalError, ValidationError

# Diagonal jitter ladder used when the regularized Gram matrix fails to
# factor (duplicate/near-duplicate sample points from dense curve sampling).
JITTER_START = 1e-10
JITTER_MAX = 1e-4
JITTER_GROWTH = 10.0

# Influence tolerance defaults to 1% of the prior variance, which puts the
# kernel influence radius at about 3 lengthscales.
DEFAULT_INFLUENCE_FRACTION = 0.01


@dataclass(frozen=True)
class KernelParams:
    """Squared exponential kernel hyperparameters plus influence tolerance."""

    lengthscale: float
    signal_variance: float
    noise_variance: float
    influence_tolerance: float | None = None

    def __post_init__(self):
        if not self.lengthscale > 0:
            raise ValidationError("lengthscale must be > 0", field="kernel.lengthscale")
        if not self.signal_variance > 0:
            raise ValidationError("signal_variance must be > 0", field="kernel.signal_variance")
        if self.noise_variance < 0:
            raise ValidationError("noise_variance must be >= 0", field="kernel.noise_variance")
        if self.influence_tolerance is not None:
            if not 0 < self.influence_tolerance < self.signal_variance:
                raise ValidationError(
                    "influence_tolerance must lie in (0, signal_variance)",
                    field="kernel.influence_tolerance",
                )

    @property
    def epsilon(self) -> float:
        """Influence tolerance, falling back to the 1% default."""
        if self.influence_tolerance is not None:
            return self.influence_tolerance
        return DEFAULT_INFLUENCE_FRACTION * self.signal_variance


@dataclass(frozen=True)
class TestSet:
    """Locations where posterior uncertainty is to be reduced."""

    __test__ = False  # not a pytest class, despite the name

    points: np.ndarray  # (m, 2)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 1:
            raise ValidationError("test set must be a nonempty (m, 2) array", field="test_points")
        if not np.all(np.isfinite(pts)):
            raise ValidationError("test points must be finite", field="test_points")
        object.__setattr__(self, "points", pts)
        # Duplicates are legal but usually a configuration mistake.
        uniq = np.unique(pts, axis=0)
        if uniq.shape[0] < pts.shape[0]:
            warnings.warn("test set contains duplicate points", stacklevel=3)

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class MeasurementSet:
    """Measurement locations with optional observed values."""

    locations: np.ndarray  # (n, 2)
    values: np.ndarray | None = None  # (n,)

    def __post_init__(self):
        locs = np.asarray(self.locations, dtype=float).reshape(-1, 2)
        object.__setattr__(self, "locations", locs)
        if self.values is not None:
            vals = np.asarray(self.values, dtype=float).ravel()
            if vals.shape[0] != locs.shape[0]:
                raise ValidationError(
                    "values cardinality must match locations", field="measurements.values"
                )
            object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return self.locations.shape[0]

    @staticmethod
    def empty() -> "MeasurementSet":
        return MeasurementSet(np.zeros((0, 2)))


def kernel_eval(x, x2, params: KernelParams) -> float:
    """Squared exponential covariance between two points."""
    x = np.asarray(x, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    d2 = float(np.sum((x - x2) ** 2))
    return params.signal_variance * math.exp(-d2 / (2.0 * params.lengthscale**2))


def kernel_matrix(A, B, params: KernelParams) -> np.ndarray:
    """Dense cross-covariance matrix between two point lists."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.size == 0 or B.size == 0:
        raise ValidationError("kernel_matrix requires nonempty point lists")
    A = A.reshape(-1, 2)
    B = B.reshape(-1, 2)
    d2 = np.sum((A[:, None, :] - B[None, :, :]) ** 2, axis=-1)
    return params.signal_variance * np.exp(-d2 / (2.0 * params.lengthscale**2))


def _factor_regularized_gram(X: np.ndarray, params: KernelParams):
    """Lower Cholesky of K_XX + noise*I, escalating diagonal jitter on failure.

    Returns (L, jitter used). Raises NumericalError with the attempted
    ladder once the cap is exceeded.
    """
    K = kernel_matrix(X, X, params)
    n = K.shape[0]
    base = K + params.noise_variance * np.eye(n)
    tried = []
    jitter = 0.0
    while True:
        try:
            L = np.linalg.cholesky(base if jitter == 0.0 else base + jitter * np.eye(n))
            return L, jitter
        except np.linalg.LinAlgError:
            tried.append(jitter)
            if jitter == 0.0:
                jitter = JITTER_START * params.signal_variance
            else:
                jitter *= JITTER_GROWTH
            if jitter > JITTER_MAX * params.signal_variance * (1 + 1e-12):
                raise NumericalError(
                    "Gram matrix factorization failed after jitter escalation",
                    jitters_tried=tried,
                ) from None


def posterior_cov_trace(T: TestSet, X: MeasurementSet, params: KernelParams) -> float:
    """Trace of the GP posterior covariance at the test set given measurements.

    With no measurements this is m * signal_variance. The solve uses a
    symmetric positive-definite factorization; see the test oracle for the
    explicit-inverse reference.
    """
    m = len(T)
    prior = m * params.signal_variance
    if len(X) == 0:
        return prior
    L, _ = _factor_regularized_gram(X.locations, params)
    K_XT = kernel_matrix(X.locations, T.points, params)
    # Tr(K_TX A^-1 K_XT) = ||L^-1 K_XT||_F^2 with A = L L^T.
    V = solve_triangular(L, K_XT, lower=True, check_finite=False)
    reduction = float(np.sum(V * V))
    return prior - reduction


def posterior_cov_trace_batch(T: TestSet, X_batch: np.ndarray, params: KernelParams) -> np.ndarray:
    """Posterior trace for a stack of measurement sets of equal size.

    X_batch has shape (B, n, 2). Uses batched Cholesky; any factorization
    failure falls back to the scalar path with its jitter ladder.
    """
    X_batch = np.asarray(X_batch, dtype=float)
    bsize, n, _ = X_batch.shape
    m = len(T)
    prior = m * params.signal_variance
    if n == 0:
        return np.full(bsize, prior)
    two_ell_sq = 2.0 * params.lengthscale**2
    d2_xx = np.sum((X_batch[:, :, None, :] - X_batch[:, None, :, :]) ** 2, axis=-1)
    K_XX = params.signal_variance * np.exp(-d2_xx / two_ell_sq)
    d2_xt = np.sum((X_batch[:, :, None, :] - T.points[None, None, :, :]) ** 2, axis=-1)
    K_XT = params.signal_variance * np.exp(-d2_xt / two_ell_sq)
    A = K_XX + params.noise_variance * np.eye(n)
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        return np.array(
            [posterior_cov_trace(T, MeasurementSet(X_batch[b]), params) for b in range(bsize)]
        )
    V = np.linalg.solve(L, K_XT)
    return prior - np.sum(V * V, axis=(1, 2))


def posterior_mean(T, X: MeasurementSet, params: KernelParams) -> np.ndarray:
    """GP posterior mean at query points, K_TX (K_XX + noise I)^-1 y."""
    if X.values is None:
        raise ValidationError("posterior_mean requires measurement values")
    if len(X) == 0:
        raise ValidationError("posterior_mean requires at least one measurement")
    T = np.asarray(T, dtype=float).reshape(-1, 2)
    L, _ = _factor_regularized_gram(X.locations, params)
    half = solve_triangular(L, X.values, lower=True, check_finite=False)
    alpha = solve_triangular(L.T, half, lower=False, check_finite=False)
    K_TX = kernel_matrix(T, X.locations, params)
    return K_TX @ alpha


def kernel_influence_radius(params: KernelParams) -> float:
    """Distance beyond which kernel correlation drops below the tolerance."""
    eps = params.epsilon
    if not 0 < eps < params.signal_variance:
        raise ValidationError("influence tolerance must lie in (0, signal_variance)")
    return params.lengthscale * math.sqrt(2.0 * math.log(params.signal_variance / eps))


@dataclass(frozen=True)
class FieldGrid:
    """Scalar field sampled on a regular grid over a rectangle.

    Values are stored row-major with the y index outermost: values[iy, ix]
    is the cell centered at (xmin + (ix+0.5)dx, ymin + (iy+0.5)dy).
    """

    extent: tuple  # (xmin, ymin, xmax, ymax)
    values: np.ndarray  # (ny, nx)
    semantics: str = "importance"

    def __post_init__(self):
        ext = tuple(float(v) for v in self.extent)
        if len(ext) != 4 or not (ext[2] > ext[0] and ext[3] > ext[1]):
            raise ValidationError("grid extent must be (xmin, ymin, xmax, ymax) with positive area", field="extent")
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 2 or vals.shape[0] < 2 or vals.shape[1] < 2:
            raise ValidationError("grid needs at least 2x2 cells", field="values")
        if not np.all(np.isfinite(vals)):
            raise ValidationError("grid values must be finite", field="values")
        if self.semantics not in ("importance", "truth"):
            raise ValidationError("semantics must be 'importance' or 'truth'", field="semantics")
        if self.semantics == "importance":
            if np.any(vals < 0) or not np.any(vals > 0):
                raise ValidationError(
                    "importance grids need nonnegative values with positive total mass",
                    field="values",
                )
        object.__setattr__(self, "extent", ext)
        object.__setattr__(self, "values", vals)

    @property
    def nx(self) -> int:
        return self.values.shape[1]

    @property
    def ny(self) -> int:
        return self.values.shape[0]

    def cell_centers(self) -> np.ndarray:
        """All cell centers as an (ny*nx, 2) array, y-major order."""
        xmin, ymin, xmax, ymax = self.extent
        dx = (xmax - xmin) / self.nx
        dy = (ymax - ymin) / self.ny
        xs = xmin + (np.arange(self.nx) + 0.5) * dx
        ys = ymin + (np.arange(self.ny) + 0.5) * dy
        gx, gy = np.meshgrid(xs, ys)
        return np.column_stack([gx.ravel(), gy.ravel()])

    def to_dict(self) -> dict:
        return {
            "extent": list(self.extent),
            "nx": self.nx,
            "ny": self.ny,
            "values": [float(v) for v in self.values.ravel()],
            "semantics": self.semantics,
        }

    @staticmethod
    def from_dict(d: dict) -> "FieldGrid":
        for key in ("extent", "nx", "ny", "values", "semantics"):
            if key not in d:
                raise ValidationError(f"grid file missing key '{key}'", field=key)
        nx, ny = int(d["nx"]), int(d["ny"])
        vals = np.asarray(d["values"], dtype=float)
        if vals.size != nx * ny:
            raise ValidationError("values length must equal nx*ny", field="values")
        return FieldGrid(tuple(d["extent"]), vals.reshape(ny, nx), d["semantics"])

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f)

    @staticmethod
    def load(path) -> "FieldGrid":
        with open(path) as f:
            return FieldGrid.from_dict(json.load(f))


def weighted_rmse(mean: FieldGrid, truth: FieldGrid, importance: FieldGrid) -> float:
    """Root mean squared error weighted by the normalized importance density."""
    for other, name in ((truth, "truth"), (importance, "importance")):
        if other.extent != mean.extent or other.values.shape != mean.values.shape:
            raise ValidationError(f"{name} grid does not match the mean grid", field=name)
    total = float(np.sum(importance.values))
    if total <= 0:
        raise ValidationError("importance grid has no mass", field="importance")
    w = importance.values / total
    sq = (mean.values - truth.values) ** 2
    return float(np.sqrt(np.sum(w * sq)))


# Rejection attempts per requested point before declaring the target density
# unreachable inside free space.
SAMPLING_ATTEMPT_FACTOR = 1000


def sample_test_points(importance: FieldGrid, env, m: int, seed: int) -> TestSet:
    """Draw test points from the importance density, rejected into free space.

    Cells are drawn from the normalized importance mass and positions are
    uniform within the chosen cell; draws landing outside free space are
    rejected. Deterministic given the seed.
    """
    if m < 1:
        raise ValidationError("m must be >= 1")
    rng = np.random.default_rng(seed)
    mass = importance.values.ravel().astype(float)
    total = mass.sum()
    if total <= 0:
        raise ValidationError("importance grid has no mass")
    probs = mass / total
    centers = importance.cell_centers()
    xmin, ymin, xmax, ymax = importance.extent
    dx = (xmax - xmin) / importance.nx
    dy = (ymax - ymin) / importance.ny

    points = []
    budget = SAMPLING_ATTEMPT_FACTOR * m
    while len(points) < m:
        if budget <= 0:
            raise InfeasibleError(
                "could not place test points in free space within the rejection budget"
            )
        budget -= 1
        idx = rng.choice(probs.size, p=probs)
        cx, cy = centers[idx]
        p = np.array([cx + (rng.random() - 0.5) * dx, cy + (rng.random() - 0.5) * dy])
        if env.point_in_free_space(p):
            points.append(p)
    return TestSet(np.array(points))
