"""Environment geometry: obstacles, reachability ellipses, signed distances.

Provides the elliptical reachability set of a length-bounded curve between
two endpoints, its kernel-radius Minkowski expansion, and the safe
obstacle-pruning predicate built on the focal-sum minimum over an obstacle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

ELLIPSE_CONTAINS_TOL = 1e-12
CONVEXITY_TOL = 1e-9

# Focal-sum minimizer settings: Barzilai-Borwein steps with an Armijo
# safeguard on a smooth convex objective (smoothness holds because the
# segment-intersection pre-check removes the nondifferentiable cases).
FOCAL_MAX_ITERS = 500
FOCAL_ARMIJO_C = 1e-4


@dataclass(frozen=True)
class Disk:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float).reshape(2)
        if not np.all(np.isfinite(c)):
            raise ValidationError("disk center must be finite", field="disk.center")
        if not self.radius > 0:
            raise ValidationError("disk radius must be > 0", field="disk.radius")
        object.__setattr__(self, "center", c)

    def to_dict(self) -> dict:
        return {"disk": {"center": [float(self.center[0]), float(self.center[1])], "radius": float(self.radius)}}


@dataclass(frozen=True)
class ConvexPolygon:
    """Strictly convex polygon with counterclockwise vertices."""

    vertices: np.ndarray  # (k, 2)

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 3:
            raise ValidationError("polygon needs >= 3 vertices", field="polygon.vertices")
        if not np.all(np.isfinite(v)):
            raise ValidationError("polygon vertices must be finite", field="polygon.vertices")
        k = v.shape[0]
        for i in range(k):
            a, b, c = v[i], v[(i + 1) % k], v[(i + 2) % k]
            cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0])
            if cross <= CONVEXITY_TOL:
                raise ValidationError(
                    "polygon must be strictly convex and counterclockwise",
                    field="polygon.vertices",
                )
        object.__setattr__(self, "vertices", v)

    def to_dict(self) -> dict:
        return {"polygon": {"vertices": [[float(x), float(y)] for x, y in self.vertices]}}


Obstacle = Disk | ConvexPolygon


def obstacle_from_dict(d: dict) -> Obstacle:
    if "disk" in d:
        spec = d["disk"]
        return Disk(np.asarray(spec["center"], dtype=float), float(spec["radius"]))
    if "polygon" in d:
        return ConvexPolygon(np.asarray(d["polygon"]["vertices"], dtype=float))
    raise ValidationError("obstacle must be a 'disk' or 'polygon' object", field="obstacles")


def workspace_signed_distance(x, ws) -> float:
    """Signed distance to the rectangle boundary: positive inside."""
    xmin, ymin, xmax, ymax = ws
    px, py = float(x[0]), float(x[1])
    dx = max(xmin - px, px - xmax)
    dy = max(ymin - py, py - ymax)
    if dx <= 0 and dy <= 0:
        return -max(dx, dy)
    return -math.hypot(max(dx, 0.0), max(dy, 0.0))


def _point_segment_distance(p, a, b) -> float:
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return float(np.linalg.norm(p - a))
    t = float(np.clip((p - a) @ ab / denom, 0.0, 1.0))
    return float(np.linalg.norm(p - (a + t * ab)))


def _polygon_contains(poly: ConvexPolygon, p) -> bool:
    v = poly.vertices
    k = v.shape[0]
    for i in range(k):
        a, b = v[i], v[(i + 1) % k]
        if (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) < 0:
            return False
    return True


def signed_distance(x, obs: Obstacle) -> float:
    """Signed distance to an obstacle: positive outside, negative inside."""
    x = np.asarray(x, dtype=float)
    if isinstance(obs, Disk):
        return float(np.linalg.norm(x - obs.center)) - obs.radius
    v = obs.vertices
    k = v.shape[0]
    if _polygon_contains(obs, x):
        # Inside: largest half-plane signed distance (all negative).
        best = -math.inf
        for i in range(k):
            a, b = v[i], v[(i + 1) % k]
            e = b - a
            n = np.array([e[1], -e[0]])  # outward for CCW
            n /= np.linalg.norm(n)
            best = max(best, float((x - a) @ n))
        return best
    return min(_point_segment_distance(x, v[i], v[(i + 1) % k]) for i in range(k))


def signed_distances(points, obs: Obstacle) -> np.ndarray:
    """Vectorized signed distance from many points to one obstacle."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if isinstance(obs, Disk):
        return np.linalg.norm(pts - obs.center, axis=1) - obs.radius
    v = obs.vertices
    k = v.shape[0]
    edges = v[(np.arange(k) + 1) % k] - v
    # Half-plane values, positive outside each edge's line (CCW outward).
    normals = np.column_stack([edges[:, 1], -edges[:, 0]])
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    H = np.einsum("pkd,kd->pk", pts[:, None, :] - v[None, :, :], normals)
    inside = np.all(H <= 0, axis=1)
    out = np.empty(pts.shape[0])
    out[inside] = H[inside].max(axis=1)
    if np.any(~inside):
        q = pts[~inside]
        rel = q[:, None, :] - v[None, :, :]
        denom = np.sum(edges * edges, axis=1)
        t = np.clip(np.einsum("pkd,kd->pk", rel, edges) / denom, 0.0, 1.0)
        proj = v[None, :, :] + t[:, :, None] * edges[None, :, :]
        d = np.linalg.norm(q[:, None, :] - proj, axis=2)
        out[~inside] = d.min(axis=1)
    return out


class ObstacleSet:
    """Batched min signed distance over a fixed obstacle collection.

    Groups disks and equally-sized polygons so one query touches a handful
    of vectorized kernels instead of a Python loop per obstacle.
    """

    def __init__(self, obstacles):
        self.obstacles = tuple(obstacles)
        disk_idx = [i for i, o in enumerate(self.obstacles) if isinstance(o, Disk)]
        self._disk_idx = np.array(disk_idx, dtype=int)
        self._centers = np.array(
            [self.obstacles[i].center for i in disk_idx]
        ).reshape(-1, 2)
        self._radii = np.array([self.obstacles[i].radius for i in disk_idx])
        groups = {}
        for i, o in enumerate(self.obstacles):
            if isinstance(o, ConvexPolygon):
                groups.setdefault(o.vertices.shape[0], []).append((i, o.vertices))
        self._poly_groups = []
        for k, items in sorted(groups.items()):
            idx = np.array([i for i, _ in items], dtype=int)
            verts = np.stack([v for _, v in items])  # (G, k, 2)
            edges = verts[:, (np.arange(k) + 1) % k] - verts
            normals = np.stack([edges[..., 1], -edges[..., 0]], axis=-1)
            normals /= np.linalg.norm(normals, axis=-1, keepdims=True)
            denom = np.sum(edges * edges, axis=-1)
            self._poly_groups.append((idx, verts, edges, normals, denom))

    def distances(self, points) -> np.ndarray:
        """Signed distances, shape (n_points, n_obstacles), original order."""
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        out = np.empty((pts.shape[0], len(self.obstacles)))
        if self._radii.size:
            d = np.linalg.norm(pts[:, None, :] - self._centers[None], axis=-1) - self._radii
            out[:, self._disk_idx] = d
        for idx, verts, edges, normals, denom in self._poly_groups:
            rel = pts[:, None, None, :] - verts[None]  # (P, G, k, 2)
            H = np.einsum("pgkd,gkd->pgk", rel, normals)
            inside = np.all(H <= 0, axis=2)  # (P, G)
            t = np.clip(np.einsum("pgkd,gkd->pgk", rel, edges) / denom, 0.0, 1.0)
            proj = verts[None] + t[..., None] * edges[None]
            d_edge = np.linalg.norm(pts[:, None, None, :] - proj, axis=-1).min(axis=2)
            out[:, idx] = np.where(inside, H.max(axis=2), d_edge)
        return out

    def min_per_obstacle(self, points) -> np.ndarray:
        """Per-obstacle minimum over the query points, original order."""
        if not self.obstacles:
            return np.empty(0)
        return self.distances(points).min(axis=0)

    def min_distance(self, points) -> float:
        """Overall minimum signed distance across points and obstacles."""
        if not self.obstacles:
            return math.inf
        return float(self.distances(points).min())


def workspace_signed_distances(points, ws) -> np.ndarray:
    """Vectorized rectangle signed distance: positive inside."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    xmin, ymin, xmax, ymax = ws
    dx = np.maximum(xmin - pts[:, 0], pts[:, 0] - xmax)
    dy = np.maximum(ymin - pts[:, 1], pts[:, 1] - ymax)
    inside = (dx <= 0) & (dy <= 0)
    out = np.where(inside, -np.maximum(dx, dy), 0.0)
    outside = ~inside
    if np.any(outside):
        out[outside] = -np.hypot(np.maximum(dx[outside], 0.0), np.maximum(dy[outside], 0.0))
    return out


def project_onto_obstacle(p, obs: Obstacle) -> np.ndarray:
    """Closest obstacle point to p (p itself when already inside)."""
    p = np.asarray(p, dtype=float)
    if isinstance(obs, Disk):
        d = p - obs.center
        r = np.linalg.norm(d)
        if r <= obs.radius:
            return p.copy()
        return obs.center + d * (obs.radius / r)
    if _polygon_contains(obs, p):
        return p.copy()
    v = obs.vertices
    k = v.shape[0]
    best, best_d = None, math.inf
    for i in range(k):
        a, b = v[i], v[(i + 1) % k]
        ab = b - a
        t = float(np.clip((p - a) @ ab / (ab @ ab), 0.0, 1.0))
        q = a + t * ab
        d = float(np.linalg.norm(p - q))
        if d < best_d:
            best, best_d = q, d
    return best


@dataclass(frozen=True)
class Environment:
    """Axis-aligned rectangular workspace with convex obstacles."""

    workspace: tuple  # (xmin, ymin, xmax, ymax)
    obstacles: tuple

    def __post_init__(self):
        ws = tuple(float(v) for v in self.workspace)
        if len(ws) != 4 or not (ws[2] > ws[0] and ws[3] > ws[1]):
            raise ValidationError("workspace must have positive area", field="workspace")
        obstacles = tuple(self.obstacles)
        for i, obs in enumerate(obstacles):
            if not _obstacle_intersects_rect(obs, ws):
                raise ValidationError(
                    f"obstacle {i} lies entirely outside the workspace", field=f"obstacles[{i}]"
                )
        object.__setattr__(self, "workspace", ws)
        object.__setattr__(self, "obstacles", obstacles)
        if not self._has_free_cell():
            raise ValidationError("free space is empty", field="obstacles")

    def _has_free_cell(self, n: int = 64) -> bool:
        xmin, ymin, xmax, ymax = self.workspace
        xs = np.linspace(xmin, xmax, n)
        ys = np.linspace(ymin, ymax, n)
        gx, gy = np.meshgrid(xs, ys)
        pts = np.column_stack([gx.ravel(), gy.ravel()])
        free = np.ones(pts.shape[0], dtype=bool)
        for obs in self.obstacles:
            free &= signed_distances(pts, obs) > 0
            if not free.any():
                return False
        return bool(free.any())

    def point_in_free_space(self, p) -> bool:
        if workspace_signed_distance(p, self.workspace) < 0:
            return False
        return all(signed_distance(p, obs) > 0 for obs in self.obstacles)

    def min_obstacle_distance(self, p) -> float:
        if not self.obstacles:
            return math.inf
        return min(signed_distance(p, obs) for obs in self.obstacles)


@dataclass(frozen=True)
class Ellipse:
    """Focal form of the reachability set: focal-distance sum <= major_len."""

    focus_u: np.ndarray
    focus_v: np.ndarray
    major_len: float

    def __post_init__(self):
        u = np.asarray(self.focus_u, dtype=float).reshape(2)
        v = np.asarray(self.focus_v, dtype=float).reshape(2)
        c = float(np.linalg.norm(u - v))
        if self.major_len < c - ELLIPSE_CONTAINS_TOL:
            raise ValidationError(
                f"major axis {self.major_len} shorter than focal distance {c}: empty ellipse"
            )
        object.__setattr__(self, "focus_u", u)
        object.__setattr__(self, "focus_v", v)

    def focal_sum(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(np.linalg.norm(x - self.focus_u) + np.linalg.norm(x - self.focus_v))


def ellipse_contains(e: Ellipse, x) -> bool:
    return e.focal_sum(x) <= e.major_len + ELLIPSE_CONTAINS_TOL


def _ellipse_boundary_distance(e: Ellipse, x) -> float:
    """Euclidean distance from x to the filled ellipse (0 when inside)."""
    if ellipse_contains(e, x):
        return 0.0
    u, v = e.focus_u, e.focus_v
    center = 0.5 * (u + v)
    c = 0.5 * float(np.linalg.norm(v - u))
    a = 0.5 * e.major_len
    b_sq = max(a * a - c * c, 0.0)
    b = math.sqrt(b_sq)
    x = np.asarray(x, dtype=float)
    if c == 0.0:
        return float(np.linalg.norm(x - center)) - a
    axis = (v - u) / (2.0 * c)
    rel = x - center
    px = abs(float(rel @ axis))
    py = abs(float(rel[0] * -axis[1] + rel[1] * axis[0]))
    if b <= 1e-12 * max(a, 1.0):
        # Degenerate: the set is the focal segment.
        return math.hypot(max(px - c, 0.0), py)
    # Closest boundary point lies in the folded quadrant; the squared
    # distance is unimodal there, so golden-section search suffices.
    def dist_sq(theta):
        return (a * math.cos(theta) - px) ** 2 + (b * math.sin(theta) - py) ** 2

    lo, hi = 0.0, 0.5 * math.pi
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    t1 = hi - invphi * (hi - lo)
    t2 = lo + invphi * (hi - lo)
    f1, f2 = dist_sq(t1), dist_sq(t2)
    for _ in range(90):
        if f1 < f2:
            hi, t2, f2 = t2, t1, f1
            t1 = hi - invphi * (hi - lo)
            f1 = dist_sq(t1)
        else:
            lo, t1, f1 = t1, t2, f2
            t2 = lo + invphi * (hi - lo)
            f2 = dist_sq(t2)
    return math.sqrt(min(f1, f2))


def influence_region_contains(e: Ellipse, r_kernel: float, x) -> bool:
    """Membership in the Minkowski sum of the ellipse and a kernel-radius ball."""
    if r_kernel < 0:
        raise ValidationError("r_kernel must be >= 0")
    fs = e.focal_sum(x)
    if fs <= e.major_len + ELLIPSE_CONTAINS_TOL:
        return True
    # The expanded-ellipse test is conservative: outside it implies outside
    # the Minkowski sum.
    if fs > e.major_len + 2.0 * r_kernel + ELLIPSE_CONTAINS_TOL:
        return False
    return _ellipse_boundary_distance(e, x) <= r_kernel + ELLIPSE_CONTAINS_TOL


def arc_length(curve_samples) -> float:
    """Chord-sum length of a polyline; under-estimates the smooth curve."""
    pts = np.asarray(curve_samples, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
        raise ValidationError("polyline needs at least two 2-D points")
    if not np.all(np.isfinite(pts)):
        raise ValidationError("polyline coordinates must be finite")
    return float(np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=1)))


def _segments_intersect(p1, p2, q1, q2) -> bool:
    """Closed-segment intersection test (touching counts)."""

    def orient(a, b, c):
        val = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        if val > 0:
            return 1
        if val < 0:
            return -1
        return 0

    def on_seg(a, b, c):
        return (
            min(a[0], b[0]) <= c[0] <= max(a[0], b[0])
            and min(a[1], b[1]) <= c[1] <= max(a[1], b[1])
        )

    o1, o2 = orient(p1, p2, q1), orient(p1, p2, q2)
    o3, o4 = orient(q1, q2, p1), orient(q1, q2, p2)
    if o1 != o2 and o3 != o4:
        return True
    if o1 == 0 and on_seg(p1, p2, q1):
        return True
    if o2 == 0 and on_seg(p1, p2, q2):
        return True
    if o3 == 0 and on_seg(q1, q2, p1):
        return True
    if o4 == 0 and on_seg(q1, q2, p2):
        return True
    return False


def _segment_hits_obstacle(u, v, obs: Obstacle) -> bool:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if isinstance(obs, Disk):
        return _point_segment_distance(obs.center, u, v) <= obs.radius
    if _polygon_contains(obs, u) or _polygon_contains(obs, v):
        return True
    verts = obs.vertices
    k = verts.shape[0]
    return any(_segments_intersect(u, v, verts[i], verts[(i + 1) % k]) for i in range(k))


def min_focal_sum(obs: Obstacle, u, v, tol: float = 1e-6) -> float:
    """Upper bound on min_{p in obstacle} ||p-u|| + ||p-v||, within tol.

    The obstacle is disjoint from E(u, v, L) exactly when this minimum
    exceeds L. When the segment uv meets the obstacle the minimum is
    ||u-v|| and is returned immediately; otherwise the objective is smooth
    and convex over the obstacle and projected gradient descent converges.
    A non-converged run returns the conservative ||u-v|| so callers never
    prune on a doubtful value.
    """
    if tol <= 0:
        raise ValidationError("tol must be > 0")
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    base = float(np.linalg.norm(u - v))
    if _segment_hits_obstacle(u, v, obs):
        return base

    def g(p):
        return float(np.linalg.norm(p - u) + np.linalg.norm(p - v))

    def grad(p):
        return (p - u) / np.linalg.norm(p - u) + (p - v) / np.linalg.norm(p - v)

    p = project_onto_obstacle(0.5 * (u + v), obs)
    gp = g(p)
    gr = grad(p)
    step = 0.25 * max(gp - base, tol)
    prev_p, prev_gr = None, None
    for it in range(FOCAL_MAX_ITERS):
        if prev_p is not None:
            # Barzilai-Borwein step from the last projected move.
            dp = p - prev_p
            dg = gr - prev_gr
            denom = float(dp @ dg)
            if denom > 1e-18:
                step = float(dp @ dp) / denom
        step = min(max(step, 1e-14), 1e6)
        t = step
        accepted = False
        for _ in range(40):
            cand = project_onto_obstacle(p - t * gr, obs)
            gc = g(cand)
            move = cand - p
            if gc <= gp + FOCAL_ARMIJO_C * float(gr @ move) + 1e-18:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            return gp  # stationary up to line-search resolution
        prev_p, prev_gr = p, gr
        p, gp = cand, gc
        gr = grad(p)
        if float(np.linalg.norm(move)) < 0.1 * tol:
            return gp
    # Iteration cap reached without convergence: never allow pruning.
    return base


def prune_obstacles(env: Environment, u, v, L_e: float, safety_margin: float) -> list:
    """Obstacles that can influence a length-L_e curve between u and v.

    Keeps an obstacle when its focal-sum minimum is within L_e plus the
    margin, so anything intersecting E(u, v, L_e) is always retained.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if L_e < float(np.linalg.norm(u - v)) - ELLIPSE_CONTAINS_TOL:
        raise ValidationError("edge budget below endpoint distance")
    kept = []
    for obs in env.obstacles:
        if min_focal_sum(obs, u, v) <= L_e + safety_margin:
            kept.append(obs)
    return kept


def _obstacle_intersects_rect(obs: Obstacle, ws) -> bool:
    xmin, ymin, xmax, ymax = ws
    if isinstance(obs, Disk):
        cx = min(max(obs.center[0], xmin), xmax)
        cy = min(max(obs.center[1], ymin), ymax)
        return math.hypot(cx - obs.center[0], cy - obs.center[1]) <= obs.radius
    corners = np.array([[xmin, ymin], [xmax, ymin], [xmax, ymax], [xmin, ymax]])
    if any(xmin <= p[0] <= xmax and ymin <= p[1] <= ymax for p in obs.vertices):
        return True
    if any(_polygon_contains(obs, c) for c in corners):
        return True
    rect_edges = [(corners[i], corners[(i + 1) % 4]) for i in range(4)]
    verts = obs.vertices
    k = verts.shape[0]
    for a, b in rect_edges:
        for i in range(k):
            if _segments_intersect(a, b, verts[i], verts[(i + 1) % k]):
                return True
    return False
