"""Helpers shared by the built-in planners."""
from __future__ import annotations

import heapq
import math

import numpy as np

from .. import world
from ..world import OccupancyGrid, TimedState

# Planner-side constraint checks are sampled; to guarantee the 0.1 s
# validator never sees a violation the planner missed, samples are tested
# against the square inflated by the distance the agent can cover between
# samples, over a slightly widened time window.
EDGE_SAMPLE_DT = 0.1


def constraint_blocks_sample(c, fp, pose: TimedState, speed: float) -> bool:
    """Conservative test: sampled pose vs inflated constraint square."""
    if pose.t < c.t_start - EDGE_SAMPLE_DT or pose.t > c.t_end + EDGE_SAMPLE_DT:
        return False
    inflate = speed * EDGE_SAMPLE_DT
    return world.footprint_hits_square(fp, pose, c.cx, c.cy, c.side + inflate)


def rest_safe(constraints, fp, pose: TimedState, t: float) -> bool:
    """Whether resting at `pose` from time t onward violates no constraint."""
    for c in constraints:
        if c.t_end >= t - 1e-9:
            if world.footprint_hits_square(fp, pose, c.cx, c.cy, c.side):
                return False
    return True


def edge_samples(a: TimedState, b: TimedState):
    """Poses along the straight segment a->b at <= EDGE_SAMPLE_DT spacing,
    including the endpoint (excluding the start, assumed checked already)."""
    dt = b.t - a.t
    n = max(1, math.ceil(dt / EDGE_SAMPLE_DT - 1e-9))
    out = []
    dtheta = world.wrap_angle(b.theta - a.theta)
    for i in range(1, n + 1):
        u = i / n
        out.append(
            TimedState(
                a.t + u * dt,
                a.x + u * (b.x - a.x),
                a.y + u * (b.y - a.y),
                world.wrap_angle(a.theta + u * dtheta),
            )
        )
    return out


class DistanceField:
    """Dijkstra distance (meters) over free grid cells; 8-connected by
    default, 4-connected when `diag` is False (tight for axis-aligned motion)."""

    def __init__(self, grid: OccupancyGrid, goal_xy, diag: bool = True):
        self.grid = grid
        self.goal = goal_xy
        self.diag = diag
        cols, rows = grid.cols, grid.rows
        res = grid.resolution_m
        dist = np.full((rows, cols), np.inf)
        gx, gy = grid.cell_of(*goal_xy)
        if grid.cells[gy * cols + gx]:
            self.dist = dist
            return
        dist[gy, gx] = 0.0
        pq = [(0.0, gx, gy)]
        diag_cost = res * math.sqrt(2)
        cells = grid.cells
        while pq:
            d, ix, iy = heapq.heappop(pq)
            if d > dist[iy, ix]:
                continue
            neighbors = (
                (1, 0), (-1, 0), (0, 1), (0, -1),
                (1, 1), (1, -1), (-1, 1), (-1, -1),
            ) if self.diag else ((1, 0), (-1, 0), (0, 1), (0, -1))
            for dx, dy in neighbors:
                nx, ny = ix + dx, iy + dy
                if nx < 0 or ny < 0 or nx >= cols or ny >= rows:
                    continue
                if cells[ny * cols + nx]:
                    continue
                nd = d + (diag_cost if dx and dy else res)
                if nd < dist[ny, nx]:
                    dist[ny, nx] = nd
                    heapq.heappush(pq, (nd, nx, ny))
        self.dist = dist

    def at(self, x: float, y: float) -> float:
        ix, iy = self.grid.cell_of(x, y)
        return float(self.dist[iy, ix])


def heuristic_seconds(field: DistanceField, x, y, dynamics) -> float:
    """Admissible time-to-goal estimate.

    Octile grid distance lower-bounds path length for axis-aligned motion;
    for free-heading dynamics it can overestimate, so fall back to the larger
    of straight-line distance and a deflated octile bound.
    """
    d = field.at(x, y)
    if math.isinf(d):
        return d
    if dynamics.model == "four_connected":
        return d / dynamics.speed
    gx, gy = field.goal
    euclid = math.hypot(x - gx, y - gy)
    return max(euclid, d / 1.0824) / dynamics.speed
