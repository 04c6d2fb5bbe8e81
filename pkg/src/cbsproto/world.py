"""Metric 2D workspace: occupancy grids, footprints, timed paths and the
geometric predicates used by conflict detection and the planners.

Everything here is a pure function of its inputs; grids, footprints and
paths are treated as immutable after construction.
"""
from __future__ import annotations

import json
import math
from bisect import bisect_right
from dataclasses import dataclass, field


class MapFormatError(ValueError):
    """Raised when a map file fails to parse or is internally inconsistent."""


TWO_PI = 2.0 * math.pi


def wrap_angle(theta: float) -> float:
    """Normalize an angle to [-pi, pi)."""
    theta = math.fmod(theta + math.pi, TWO_PI)
    if theta < 0:
        theta += TWO_PI
    return theta - math.pi


# ---------------------------------------------------------------------------
# occupancy grid


@dataclass(frozen=True)
class OccupancyGrid:
    width_m: float
    height_m: float
    resolution_m: float
    cells: tuple  # row-major booleans, row 0 covers y in [0, resolution_m)
    name: str = ""

    def __post_init__(self):
        if self.resolution_m <= 0:
            raise MapFormatError("resolution_m must be positive")
        expected = self.cols * self.rows
        if len(self.cells) != expected:
            raise MapFormatError(
                f"cells: expected {expected} entries "
                f"({self.cols}x{self.rows}), got {len(self.cells)}"
            )

    @property
    def cols(self) -> int:
        return round(self.width_m / self.resolution_m)

    @property
    def rows(self) -> int:
        return round(self.height_m / self.resolution_m)

    def occupied(self, ix: int, iy: int) -> bool:
        """Occupancy of cell (ix, iy); out-of-range cells count as occupied."""
        if ix < 0 or iy < 0 or ix >= self.cols or iy >= self.rows:
            return True
        return bool(self.cells[iy * self.cols + ix])

    def occupied_fraction(self) -> float:
        return sum(1 for c in self.cells if c) / len(self.cells)

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        res = self.resolution_m
        ix = min(max(int(x / res), 0), self.cols - 1)
        iy = min(max(int(y / res), 0), self.rows - 1)
        return ix, iy

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "width_m": self.width_m,
            "height_m": self.height_m,
            "resolution_m": self.resolution_m,
            "cells": [1 if c else 0 for c in self.cells],
        }


def load_map(source: bytes | str) -> OccupancyGrid:
    """Parse the map JSON format into an OccupancyGrid."""
    try:
        data = json.loads(source)
    except json.JSONDecodeError as exc:
        raise MapFormatError(f"map is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise MapFormatError("map JSON must be an object")
    for key in ("width_m", "height_m", "resolution_m", "cells"):
        if key not in data:
            raise MapFormatError(f"map JSON missing field {key!r}")
    for key in ("width_m", "height_m", "resolution_m"):
        if not isinstance(data[key], (int, float)):
            raise MapFormatError(f"{key}: expected a number")
    if data["resolution_m"] <= 0:
        raise MapFormatError("resolution_m: must be positive")
    cells = data["cells"]
    if not isinstance(cells, list) or any(c not in (0, 1) for c in cells):
        raise MapFormatError("cells: expected a list of 0/1")
    return OccupancyGrid(
        width_m=float(data["width_m"]),
        height_m=float(data["height_m"]),
        resolution_m=float(data["resolution_m"]),
        cells=tuple(bool(c) for c in cells),
        name=str(data.get("name", "")),
    )


def save_map(grid: OccupancyGrid) -> str:
    return json.dumps(grid.to_json_dict(), sort_keys=True, separators=(",", ":"))


def load_map_file(path) -> OccupancyGrid:
    with open(path) as f:
        return load_map(f.read())


def save_map_file(grid: OccupancyGrid, path):
    with open(path, "w") as f:
        f.write(save_map(grid))
        f.write("\n")


# ---------------------------------------------------------------------------
# footprints


@dataclass(frozen=True)
class Footprint:
    """Rigid convex footprint: 'circle', 'rectangle' or 'triangle'.

    Rectangle dims are (length, width); triangle dims are (base, height),
    canonically an isosceles triangle pointing along +x with its centroid
    at the origin.
    """

    shape: str
    dims: tuple

    def __post_init__(self):
        if self.shape not in ("circle", "rectangle", "triangle"):
            raise ValueError(f"unknown footprint shape {self.shape!r}")
        if any(d <= 0 for d in self.dims):
            raise ValueError("footprint dimensions must be positive")
        n = 1 if self.shape == "circle" else 2
        if len(self.dims) != n:
            raise ValueError(f"{self.shape} footprint takes {n} dimension(s)")

    @staticmethod
    def circle(radius: float) -> "Footprint":
        return Footprint("circle", (radius,))

    @staticmethod
    def rectangle(length: float, width: float) -> "Footprint":
        return Footprint("rectangle", (length, width))

    @staticmethod
    def triangle(base: float, height: float) -> "Footprint":
        return Footprint("triangle", (base, height))

    @property
    def circumradius(self) -> float:
        if self.shape == "circle":
            return self.dims[0]
        return max(math.hypot(x, y) for x, y in self.canonical_vertices())

    def canonical_vertices(self) -> tuple:
        """CCW vertices at the identity pose (circles have none)."""
        if self.shape == "rectangle":
            l, w = self.dims
            return ((l / 2, -w / 2), (l / 2, w / 2), (-l / 2, w / 2), (-l / 2, -w / 2))
        if self.shape == "triangle":
            b, h = self.dims
            return ((2 * h / 3, 0.0), (-h / 3, b / 2), (-h / 3, -b / 2))
        return ()

    def area(self) -> float:
        if self.shape == "circle":
            return math.pi * self.dims[0] ** 2
        return polygon_area(self.canonical_vertices())

    def to_json_dict(self) -> dict:
        if self.shape == "circle":
            return {"shape": "circle", "radius": self.dims[0]}
        if self.shape == "rectangle":
            return {"shape": "rectangle", "length": self.dims[0], "width": self.dims[1]}
        return {"shape": "triangle", "base": self.dims[0], "height": self.dims[1]}

    @staticmethod
    def from_json_dict(d: dict) -> "Footprint":
        shape = d.get("shape")
        if shape == "circle":
            return Footprint.circle(float(d["radius"]))
        if shape == "rectangle":
            return Footprint.rectangle(float(d["length"]), float(d["width"]))
        if shape == "triangle":
            return Footprint.triangle(float(d["base"]), float(d["height"]))
        raise ValueError(f"unknown footprint shape {shape!r}")


def polygon_area(verts) -> float:
    a = 0.0
    n = len(verts)
    for i in range(n):
        x1, y1 = verts[i]
        x2, y2 = verts[(i + 1) % n]
        a += x1 * y2 - x2 * y1
    return abs(a) / 2


# ---------------------------------------------------------------------------
# timed states and paths


@dataclass(frozen=True)
class TimedState:
    t: float
    x: float
    y: float
    theta: float = 0.0


class TimedPath:
    """Ordered waypoints with strictly increasing time, starting at t=0."""

    __slots__ = ("states", "cost", "_times")

    def __init__(self, states, cost: float):
        states = tuple(states)
        if not states:
            raise ValueError("path needs at least one state")
        if abs(states[0].t) > 1e-9:
            raise ValueError("path must start at t=0")
        for a, b in zip(states, states[1:]):
            if b.t <= a.t:
                raise ValueError("waypoint times must be strictly increasing")
        if cost < 0:
            raise ValueError("cost must be nonnegative")
        self.states = states
        self.cost = float(cost)
        self._times = [s.t for s in states]

    @property
    def makespan(self) -> float:
        return self.states[-1].t

    def __repr__(self):
        return f"TimedPath({len(self.states)} states, cost={self.cost:.3f})"


def sample_state(path: TimedPath, t: float) -> TimedState:
    """Pose at time t: linear in (x, y), shortest-arc in theta.

    Past the final waypoint the agent rests at its final pose.
    """
    states = path.states
    if t <= states[0].t:
        s = states[0]
        return TimedState(t, s.x, s.y, s.theta)
    if t >= states[-1].t:
        s = states[-1]
        return TimedState(t, s.x, s.y, s.theta)
    i = bisect_right(path._times, t)
    a, b = states[i - 1], states[i]
    if t == a.t:
        return a
    u = (t - a.t) / (b.t - a.t)
    dtheta = wrap_angle(b.theta - a.theta)
    return TimedState(
        t,
        a.x + u * (b.x - a.x),
        a.y + u * (b.y - a.y),
        wrap_angle(a.theta + u * dtheta),
    )


@dataclass(frozen=True)
class SpaceTimeVolume:
    """Compact space-time volume: a rigid footprint swept along a timed path."""

    path: TimedPath
    footprint: Footprint


# ---------------------------------------------------------------------------
# placed-footprint geometry


def footprint_polygon(fp: Footprint, pose: TimedState):
    """Footprint vertices at a pose (CCW); circles return ('circle', cx, cy, r)."""
    if fp.shape == "circle":
        return ("circle", pose.x, pose.y, fp.dims[0])
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    return tuple(
        (pose.x + c * vx - s * vy, pose.y + s * vx + c * vy)
        for vx, vy in fp.canonical_vertices()
    )


def _project(verts, ax, ay):
    lo = hi = verts[0][0] * ax + verts[0][1] * ay
    for x, y in verts[1:]:
        d = x * ax + y * ay
        if d < lo:
            lo = d
        elif d > hi:
            hi = d
    return lo, hi


def _poly_poly_overlap(pa, pb) -> bool:
    """Separating-axis test for convex polygons; contact counts as overlap."""
    for poly in (pa, pb):
        n = len(poly)
        for i in range(n):
            x1, y1 = poly[i]
            x2, y2 = poly[(i + 1) % n]
            ax, ay = y1 - y2, x2 - x1  # edge normal
            alo, ahi = _project(pa, ax, ay)
            blo, bhi = _project(pb, ax, ay)
            if ahi < blo or bhi < alo:
                return False
    return True


def _point_segment_dist2(px, py, x1, y1, x2, y2) -> float:
    dx, dy = x2 - x1, y2 - y1
    d2 = dx * dx + dy * dy
    if d2 == 0:
        return (px - x1) ** 2 + (py - y1) ** 2
    u = ((px - x1) * dx + (py - y1) * dy) / d2
    u = min(1.0, max(0.0, u))
    cx, cy = x1 + u * dx, y1 + u * dy
    return (px - cx) ** 2 + (py - cy) ** 2


def point_in_polygon(px, py, poly) -> bool:
    """Point membership for a CCW convex polygon, boundary inclusive."""
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        if (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1) < -1e-12:
            return False
    return True


def _circle_poly_overlap(cx, cy, r, poly) -> bool:
    if point_in_polygon(cx, cy, poly):
        return True
    n = len(poly)
    r2 = r * r
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        if _point_segment_dist2(cx, cy, x1, y1, x2, y2) <= r2:
            return True
    return False


def overlaps(fpA: Footprint, poseA: TimedState, fpB: Footprint, poseB: TimedState) -> bool:
    """True iff the two placed footprints intersect (contact included)."""
    # cheap broad-phase on circumcircles
    ra, rb = fpA.circumradius, fpB.circumradius
    dx, dy = poseB.x - poseA.x, poseB.y - poseA.y
    if dx * dx + dy * dy > (ra + rb) ** 2 + 1e-12:
        return False
    ga = footprint_polygon(fpA, poseA)
    gb = footprint_polygon(fpB, poseB)
    a_circle = ga and ga[0] == "circle"
    b_circle = gb and gb[0] == "circle"
    if a_circle and b_circle:
        return math.hypot(dx, dy) <= ga[3] + gb[3]
    if a_circle:
        return _circle_poly_overlap(ga[1], ga[2], ga[3], gb)
    if b_circle:
        return _circle_poly_overlap(gb[1], gb[2], gb[3], ga)
    return _poly_poly_overlap(ga, gb)


def placed_clearance(fpA, poseA, fpB, poseB) -> float:
    """Boundary-to-boundary distance between two placed footprints; 0 on overlap."""
    ga = footprint_polygon(fpA, poseA)
    gb = footprint_polygon(fpB, poseB)
    a_circle = ga and ga[0] == "circle"
    b_circle = gb and gb[0] == "circle"
    if a_circle and b_circle:
        d = math.hypot(poseB.x - poseA.x, poseB.y - poseA.y) - ga[3] - gb[3]
        return max(0.0, d)
    if a_circle or b_circle:
        if b_circle:
            ga, gb = gb, ga
        cx, cy, r = ga[1], ga[2], ga[3]
        if _circle_poly_overlap(cx, cy, r, gb):
            return 0.0
        n = len(gb)
        d2 = min(
            _point_segment_dist2(cx, cy, *gb[i], *gb[(i + 1) % n]) for i in range(n)
        )
        return max(0.0, math.sqrt(d2) - r)
    if _poly_poly_overlap(ga, gb):
        return 0.0
    best = math.inf
    na, nb = len(ga), len(gb)
    for i in range(na):
        x1, y1 = ga[i]
        x2, y2 = ga[(i + 1) % na]
        for j in range(nb):
            x3, y3 = gb[j]
            x4, y4 = gb[(j + 1) % nb]
            best = min(
                best,
                _point_segment_dist2(x1, y1, x3, y3, x4, y4),
                _point_segment_dist2(x3, y3, x1, y1, x2, y2),
            )
    return math.sqrt(best)


def _cell_rect(grid: OccupancyGrid, ix: int, iy: int):
    res = grid.resolution_m
    x0, y0 = ix * res, iy * res
    return ((x0, y0), (x0 + res, y0), (x0 + res, y0 + res), (x0, y0 + res))


def static_collides(grid: OccupancyGrid, fp: Footprint, pose: TimedState) -> bool:
    """True iff the placed footprint touches an occupied cell or the map edge."""
    geo = footprint_polygon(fp, pose)
    if geo and geo[0] == "circle":
        cx, cy, r = geo[1], geo[2], geo[3]
        xmin, xmax = cx - r, cx + r
        ymin, ymax = cy - r, cy + r
    else:
        xs = [v[0] for v in geo]
        ys = [v[1] for v in geo]
        xmin, xmax = min(xs), max(xs)
        ymin, ymax = min(ys), max(ys)
    if xmin <= 0 or ymin <= 0 or xmax >= grid.width_m or ymax >= grid.height_m:
        return True
    res = grid.resolution_m
    ix0 = max(0, int(xmin / res))
    ix1 = min(grid.cols - 1, int(xmax / res))
    iy0 = max(0, int(ymin / res))
    iy1 = min(grid.rows - 1, int(ymax / res))
    circle = geo[0] == "circle" if geo else False
    for iy in range(iy0, iy1 + 1):
        row = iy * grid.cols
        for ix in range(ix0, ix1 + 1):
            if not grid.cells[row + ix]:
                continue
            rect = _cell_rect(grid, ix, iy)
            if circle:
                if _circle_poly_overlap(geo[1], geo[2], geo[3], rect):
                    return True
            elif _poly_poly_overlap(geo, rect):
                return True
    return False


def constraint_square_polygon(cx: float, cy: float, side: float):
    h = side / 2
    return ((cx - h, cy - h), (cx + h, cy - h), (cx + h, cy + h), (cx - h, cy + h))


def footprint_hits_square(fp: Footprint, pose: TimedState, cx, cy, side) -> bool:
    # broad-phase: Chebyshev distance vs circumradius + half-diagonal
    reach = fp.circumradius + side * math.sqrt(2) / 2
    if (pose.x - cx) ** 2 + (pose.y - cy) ** 2 > reach * reach + 1e-12:
        return False
    square = constraint_square_polygon(cx, cy, side)
    geo = footprint_polygon(fp, pose)
    if geo and geo[0] == "circle":
        return _circle_poly_overlap(geo[1], geo[2], geo[3], square)
    return _poly_poly_overlap(geo, square)


def violates_constraint(vol: SpaceTimeVolume, c, dt: float = 0.1) -> bool:
    """Whether the volume enters the constraint square at any sampled time.

    Samples t = c.t_start, +dt, ... inclusive of both interval endpoints.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    t = c.t_start
    while t < c.t_end - 1e-9:
        pose = sample_state(vol.path, t)
        if footprint_hits_square(vol.footprint, pose, c.cx, c.cy, c.side):
            return True
        t += dt
    pose = sample_state(vol.path, c.t_end)
    return footprint_hits_square(vol.footprint, pose, c.cx, c.cy, c.side)
