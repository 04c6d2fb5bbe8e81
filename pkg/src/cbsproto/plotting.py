"""Dependency-free SVG rendering of solutions.

Draws map obstacles, one polyline per agent, footprint outlines at each
agent's start and goal poses, and an X marker per constraint colored by its
start time on a blue-to-red ramp.
"""
from __future__ import annotations

from . import world
from .world import Footprint, TimedState

SCALE = 40.0  # px per meter
PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)


def _ramp(u: float) -> str:
    """Blue (early) to red (late)."""
    u = min(1.0, max(0.0, u))
    r = round(40 + 215 * u)
    b = round(255 - 215 * u)
    return f"#{r:02x}40{b:02x}"


class _Canvas:
    def __init__(self, width_m, height_m):
        self.h = height_m
        self.parts = []
        self.width_px = width_m * SCALE
        self.height_px = height_m * SCALE

    def pt(self, x, y):
        return (x * SCALE, (self.h - y) * SCALE)

    def add(self, s):
        self.parts.append(s)

    def render(self):
        head = (
            f'<svg xmlns="http://www.w3.org/2000/svg" '
            f'width="{self.width_px:.0f}" height="{self.height_px:.0f}" '
            f'viewBox="0 0 {self.width_px:.2f} {self.height_px:.2f}">'
        )
        return "\n".join([head, *self.parts, "</svg>"])


def _footprint_outline(c, fp: Footprint, pose: TimedState, color):
    poly = world.footprint_polygon(fp, pose)
    if poly[0] == "circle":
        _, cx, cy, r = poly
        px, py = c.pt(cx, cy)
        c.add(
            f'<circle class="footprint" cx="{px:.2f}" cy="{py:.2f}" '
            f'r="{r * SCALE:.2f}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
        return
    pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in (c.pt(*v) for v in poly))
    c.add(
        f'<polygon class="footprint" points="{pts}" fill="none" '
        f'stroke="{color}" stroke-width="1.5"/>'
    )


def constraint_marker_center(cx, cy, height_m):
    """Map coordinates of a constraint's X marker in SVG pixel space."""
    return (cx * SCALE, (height_m - cy) * SCALE)


def solution_svg(solution: dict, grid=None) -> str:
    """Render a Solution JSON dict; the map argument adds obstacle cells."""
    agents = solution.get("agents", [])
    constraints = solution.get("constraints_used", [])
    if grid is not None:
        width_m, height_m = grid.width_m, grid.height_m
    else:
        xs = [p[1] for a in agents for p in a["path"]] or [1.0]
        ys = [p[2] for a in agents for p in a["path"]] or [1.0]
        width_m = max(xs) + 1.0
        height_m = max(ys) + 1.0
    c = _Canvas(width_m, height_m)
    c.add(
        f'<rect x="0" y="0" width="{c.width_px:.2f}" height="{c.height_px:.2f}" '
        f'fill="#fafafa"/>'
    )

    if grid is not None:
        res = grid.resolution_m
        for iy in range(grid.rows):
            for ix in range(grid.cols):
                if grid.cells[iy * grid.cols + ix]:
                    px, py = c.pt(ix * res, (iy + 1) * res)
                    c.add(
                        f'<rect class="obstacle" x="{px:.2f}" y="{py:.2f}" '
                        f'width="{res * SCALE:.2f}" height="{res * SCALE:.2f}" '
                        f'fill="#444"/>'
                    )

    for i, agent in enumerate(agents):
        color = PALETTE[i % len(PALETTE)]
        path = agent["path"]
        pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in (c.pt(p[1], p[2]) for p in path))
        c.add(
            f'<polyline class="agent-path" data-agent="{agent["id"]}" '
            f'points="{pts}" fill="none" stroke="{color}" stroke-width="2"/>'
        )
        fp = Footprint.from_json_dict(agent["footprint"])
        for p in (path[0], path[-1]):
            pose = TimedState(0.0, p[1], p[2], p[3])
            _footprint_outline(c, fp, pose, color)

    if constraints:
        t_lo = min(k["t_start"] for k in constraints)
        t_hi = max(k["t_start"] for k in constraints)
        span = max(t_hi - t_lo, 1e-9)
        arm = 0.08 * SCALE
        for k in constraints:
            px, py = c.pt(k["cx"], k["cy"])
            color = _ramp((k["t_start"] - t_lo) / span)
            for sx, sy in ((1, 1), (1, -1)):
                c.add(
                    f'<line class="constraint-marker" '
                    f'x1="{px - arm * sx:.2f}" y1="{py - arm * sy:.2f}" '
                    f'x2="{px + arm * sx:.2f}" y2="{py + arm * sy:.2f}" '
                    f'stroke="{color}" stroke-width="2"/>'
                )
    return c.render()
