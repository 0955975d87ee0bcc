"""Deterministic SVG rendering of planning scenes.

Pure string assembly with fixed float formatting so identical inputs yield
byte-identical documents: workspace frame, shaded obstacles, thin roadmap,
thick trajectory, measurement dots, test crosses, start/goal markers, and
optional per-edge allocation ellipses.
"""

from __future__ import annotations

import math

import numpy as np

from .geometry import Disk
from .refine import sample_segment

CANVAS = 720.0
PAD = 36.0

COL_OBSTACLE = "#f2b8b5"
COL_OBSTACLE_EDGE = "#c96f6a"
COL_GRAPH = "#b0b7c3"
COL_TRAJ = "#31446c"
COL_MEAS = "#1f77b4"
COL_TEST = "#2456d6"
COL_START = "#2e9e44"
COL_GOAL = "#e8842c"
COL_ELLIPSE = "#7a62b8"


def _fmt(x: float) -> str:
    return f"{x:.4f}"


class _Frame:
    def __init__(self, workspace):
        xmin, ymin, xmax, ymax = workspace
        w, h = xmax - xmin, ymax - ymin
        scale = (CANVAS - 2 * PAD) / max(w, h)
        self.xmin, self.ymin = xmin, ymin
        self.scale = scale
        self.width = w * scale + 2 * PAD
        self.height = h * scale + 2 * PAD
        self.ymax = ymax

    def pt(self, p):
        # SVG y axis points down.
        x = PAD + (p[0] - self.xmin) * self.scale
        y = PAD + (self.ymax - p[1]) * self.scale
        return _fmt(x), _fmt(y)

    def length(self, d):
        return d * self.scale


def _polyline(frame, pts, stroke, width, dash=None, opacity=None):
    coords = " ".join(",".join(frame.pt(p)) for p in pts)
    extra = f' stroke-dasharray="{dash}"' if dash else ""
    extra += f' stroke-opacity="{opacity}"' if opacity else ""
    return (
        f'<polyline points="{coords}" fill="none" stroke="{stroke}" '
        f'stroke-width="{width}"{extra}/>'
    )


def _cross(frame, p, size, stroke, width):
    x, y = frame.pt(p)
    x, y = float(x), float(y)
    s = size
    return (
        f'<path d="M {_fmt(x - s)} {_fmt(y - s)} L {_fmt(x + s)} {_fmt(y + s)} '
        f'M {_fmt(x - s)} {_fmt(y + s)} L {_fmt(x + s)} {_fmt(y - s)}" '
        f'stroke="{stroke}" stroke-width="{width}"/>'
    )


def _obstacle_svg(frame, obs):
    if isinstance(obs, Disk):
        cx, cy = frame.pt(obs.center)
        r = _fmt(frame.length(obs.radius))
        return (
            f'<circle cx="{cx}" cy="{cy}" r="{r}" fill="{COL_OBSTACLE}" '
            f'stroke="{COL_OBSTACLE_EDGE}" stroke-width="1.2"/>'
        )
    coords = " ".join(",".join(frame.pt(p)) for p in obs.vertices)
    return (
        f'<polygon points="{coords}" fill="{COL_OBSTACLE}" '
        f'stroke="{COL_OBSTACLE_EDGE}" stroke-width="1.2"/>'
    )


def _alloc_ellipse_svg(frame, u, v, L):
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    c = 0.5 * float(np.linalg.norm(v - u))
    a = 0.5 * L
    b = math.sqrt(max(a * a - c * c, 0.0))
    center = 0.5 * (u + v)
    angle = math.degrees(math.atan2(v[1] - u[1], v[0] - u[0]))
    cx, cy = frame.pt(center)
    rx = _fmt(frame.length(a))
    ry = _fmt(frame.length(b))
    # Screen y is flipped, so the rotation angle negates.
    return (
        f'<ellipse cx="{cx}" cy="{cy}" rx="{rx}" ry="{ry}" '
        f'transform="rotate({_fmt(-angle)} {cx} {cy})" fill="none" '
        f'stroke="{COL_ELLIPSE}" stroke-width="1.0" stroke-dasharray="6 4" stroke-opacity="0.8"/>'
    )


def render_svg(scenario, trajectory=None, test_points=None, measurements=None,
               allocation_ellipses=None) -> str:
    """Compose the scene as an SVG document string.

    allocation_ellipses: optional list of (u, v, major_len) triples drawn as
    dashed outlines, one per path edge.
    """
    frame = _Frame(scenario.environment.workspace)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(frame.width)}" '
        f'height="{_fmt(frame.height)}" viewBox="0 0 {_fmt(frame.width)} {_fmt(frame.height)}">',
        f'<rect width="{_fmt(frame.width)}" height="{_fmt(frame.height)}" fill="#ffffff"/>',
    ]
    ws = scenario.environment.workspace
    corners = [(ws[0], ws[1]), (ws[2], ws[1]), (ws[2], ws[3]), (ws[0], ws[3]), (ws[0], ws[1])]
    parts.append(_polyline(frame, corners, "#444444", 1.5))
    for obs in scenario.environment.obstacles:
        parts.append(_obstacle_svg(frame, obs))
    verts = scenario.graph.vertices
    for i, j in scenario.graph.edges:
        parts.append(_polyline(frame, [verts[i], verts[j]], COL_GRAPH, 1.0, opacity="0.8"))
    for p in verts:
        x, y = frame.pt(p)
        parts.append(f'<circle cx="{x}" cy="{y}" r="2.5" fill="{COL_GRAPH}"/>')
    if allocation_ellipses:
        for u, v, L in allocation_ellipses:
            parts.append(_alloc_ellipse_svg(frame, u, v, L))
    if trajectory is not None:
        for seg in trajectory.segments:
            pts = sample_segment(seg, 64)
            parts.append(_polyline(frame, pts, COL_TRAJ, 3.0))
    if measurements is not None:
        for p in np.asarray(measurements):
            x, y = frame.pt(p)
            parts.append(f'<circle cx="{x}" cy="{y}" r="3.0" fill="{COL_MEAS}"/>')
    if test_points is not None:
        for p in np.asarray(test_points):
            parts.append(_cross(frame, p, 5.0, COL_TEST, 1.6))
    start = frame.pt(scenario.start_point())
    goal = frame.pt(scenario.goal_point())
    parts.append(f'<circle cx="{start[0]}" cy="{start[1]}" r="7.0" fill="{COL_START}"/>')
    parts.append(f'<circle cx="{goal[0]}" cy="{goal[1]}" r="7.0" fill="{COL_GOAL}"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
