"""Spatial RRT with per-vertex arrival times and tree-reuse experience.

Vertices carry the time they are reached (parent time + edge length / speed);
edges are validated against static obstacles and constraint squares at the
timestamps of their samples. The solver has no wait actions, so it is
incomplete: queries whose only solutions require waiting may fail even when
a feasible timed path exists.
"""
from __future__ import annotations

import math
import random
import time as _time

from .. import world
from ..planner_api import SUCCESS, PlanResult
from ..world import SpaceTimeVolume, TimedPath, TimedState
from . import common

STEP = 0.5
GOAL_BIAS = 0.05
MAX_SAMPLES = 50_000
_BUCKET = 0.5


class _Tree:
    def __init__(self, root_xy, root_t):
        self.xs = [root_xy[0]]
        self.ys = [root_xy[1]]
        self.ts = [root_t]
        self.parent = [-1]
        self.buckets = {}
        self._bucket_add(0)

    def __len__(self):
        return len(self.xs)

    def _bucket_add(self, i):
        key = (int(self.xs[i] / _BUCKET), int(self.ys[i] / _BUCKET))
        self.buckets.setdefault(key, []).append(i)

    def add(self, x, y, t, parent):
        self.xs.append(x)
        self.ys.append(y)
        self.ts.append(t)
        self.parent.append(parent)
        i = len(self.xs) - 1
        self._bucket_add(i)
        return i

    def nearest(self, x, y) -> int:
        # expanding ring scan over the bucket hash; a point in ring r is at
        # least (r - 1) * bucket away, so stop once that exceeds the best
        bx, by = int(x / _BUCKET), int(y / _BUCKET)
        best, best_d2 = -1, math.inf
        ring = 0
        while True:
            for kx in range(bx - ring, bx + ring + 1):
                for ky in range(by - ring, by + ring + 1):
                    if max(abs(kx - bx), abs(ky - by)) != ring:
                        continue
                    for i in self.buckets.get((kx, ky), ()):
                        d2 = (self.xs[i] - x) ** 2 + (self.ys[i] - y) ** 2
                        if d2 < best_d2:
                            best, best_d2 = i, d2
            if best >= 0 and (ring - 1) * _BUCKET > math.sqrt(best_d2):
                return best
            ring += 1
            if ring > 1000:
                return best

    def branch(self, i):
        out = []
        while i >= 0:
            out.append(i)
            i = self.parent[i]
        out.reverse()
        return out


class RRTPlanner:
    """plan() implementation for 'none' and 'four_connected' agents."""

    def __init__(self, agent, grid, params=None, seed=0):
        params = params or {}
        self.agent = agent
        self.grid = grid
        self.step = float(params.get("step", STEP))
        self.goal_bias = float(params.get("goal_bias", GOAL_BIAS))
        self.max_samples = int(params.get("max_samples", MAX_SAMPLES))
        self.experience = bool(params.get("experience", True))
        self.rng = random.Random(seed)
        self._tree = None  # kept between queries when experience is on
        self.last_stats = {}

    def plan(self, constraints, deadline) -> PlanResult:
        task = self.agent.task
        if task.kind != "start_goal":
            raise ValueError("RRTPlanner handles start_goal tasks; wrap coverage")
        start = self.agent.start
        return self.search(
            start, 0.0, (task.goal.x, task.goal.y), task.goal_tolerance,
            constraints, deadline, keep_tree=True,
        )

    def search(self, start, t0, goal_xy, tol, constraints, deadline, keep_tree=False):
        t_limit = _time.monotonic() + deadline
        fp = self.agent.footprint
        speed = self.agent.dynamics.speed
        cons = [c for c in constraints if c.agent_id == self.agent.agent_id]
        samples_used = 0

        if world.static_collides(self.grid, fp, start):
            self.last_stats = {"samples": 0, "tree_size": 0, "reused": 0}
            return PlanResult.failure()

        tree = None
        reused = 0
        if keep_tree and self.experience and self._tree is not None:
            prev = self._tree
            if (
                abs(prev.xs[0] - start.x) < 1e-9
                and abs(prev.ys[0] - start.y) < 1e-9
                and prev.ts[0] == t0
            ):
                tree = self.prune_tree(prev, cons)
                reused = len(tree)
        if tree is None:
            tree = _Tree((start.x, start.y), t0)

        # a surviving vertex may already satisfy the task
        goal_i = self._best_goal_vertex(tree, goal_xy, tol, cons)
        while goal_i is None:
            samples_used += 1
            if samples_used > self.max_samples:
                if keep_tree and self.experience:
                    self._tree = tree
                self.last_stats = {
                    "samples": samples_used, "tree_size": len(tree), "reused": reused,
                }
                return PlanResult.failure()
            if samples_used % 64 == 0 and _time.monotonic() > t_limit:
                if keep_tree and self.experience:
                    self._tree = tree
                self.last_stats = {
                    "samples": samples_used, "tree_size": len(tree), "reused": reused,
                }
                return PlanResult.timeout()

            if self.rng.random() < self.goal_bias:
                sx, sy = goal_xy
            else:
                sx = self.rng.uniform(0.0, self.grid.width_m)
                sy = self.rng.uniform(0.0, self.grid.height_m)
            ni = tree.nearest(sx, sy)
            nx, ny, nt = tree.xs[ni], tree.ys[ni], tree.ts[ni]
            ex, ey = self._steer(nx, ny, sx, sy)
            if ex is None:
                continue
            dist = math.hypot(ex - nx, ey - ny)
            if dist < 1e-9:
                continue
            et = nt + dist / speed
            if self._edge_ok(nx, ny, nt, ex, ey, et, fp, cons, speed):
                vi = tree.add(ex, ey, et, ni)
                if math.hypot(ex - goal_xy[0], ey - goal_xy[1]) <= tol + 1e-9:
                    pose = TimedState(et, ex, ey, 0.0)
                    if common.rest_safe(cons, fp, pose, et):
                        goal_i = vi

        if keep_tree and self.experience:
            self._tree = tree
        self.last_stats = {
            "samples": samples_used, "tree_size": len(tree), "reused": reused,
        }
        path = self._emit(tree, goal_i, t0)
        return PlanResult(SUCCESS, SpaceTimeVolume(path, fp), path.cost)

    # -- internals ----------------------------------------------------------

    def _steer(self, nx, ny, sx, sy):
        dx, dy = sx - nx, sy - ny
        if self.agent.dynamics.model == "four_connected":
            # axis-aligned step along the dominant axis
            if abs(dx) >= abs(dy):
                dy, dx = 0.0, math.copysign(min(abs(dx), self.step), dx)
            else:
                dx, dy = 0.0, math.copysign(min(abs(dy), self.step), dy)
            if abs(dx) + abs(dy) < 1e-9:
                return None, None
            return nx + dx, ny + dy
        d = math.hypot(dx, dy)
        if d < 1e-9:
            return None, None
        if d > self.step:
            dx, dy = dx / d * self.step, dy / d * self.step
        return nx + dx, ny + dy

    def _edge_ok(self, x1, y1, t1, x2, y2, t2, fp, cons, speed):
        a = TimedState(t1, x1, y1, 0.0)
        b = TimedState(t2, x2, y2, 0.0)
        for pose in common.edge_samples(a, b):
            if world.static_collides(self.grid, fp, pose):
                return False
            for c in cons:
                if common.constraint_blocks_sample(c, fp, pose, speed):
                    return False
        return True

    def _best_goal_vertex(self, tree, goal_xy, tol, cons):
        best, best_t = None, math.inf
        fp = self.agent.footprint
        for i in range(len(tree)):
            if math.hypot(tree.xs[i] - goal_xy[0], tree.ys[i] - goal_xy[1]) <= tol + 1e-9:
                pose = TimedState(tree.ts[i], tree.xs[i], tree.ys[i], 0.0)
                if tree.ts[i] < best_t and common.rest_safe(cons, fp, pose, tree.ts[i]):
                    best, best_t = i, tree.ts[i]
        return best

    def prune_tree(self, prev: _Tree, cons) -> _Tree:
        """Drop every subtree hanging from an edge invalid under `cons`."""
        fp = self.agent.footprint
        speed = self.agent.dynamics.speed
        new = _Tree((prev.xs[0], prev.ys[0]), prev.ts[0])
        remap = {0: 0}
        for i in range(1, len(prev)):
            p = prev.parent[i]
            if p not in remap:
                continue
            if self._edge_ok(
                prev.xs[p], prev.ys[p], prev.ts[p],
                prev.xs[i], prev.ys[i], prev.ts[i],
                fp, cons, speed,
            ):
                remap[i] = new.add(prev.xs[i], prev.ys[i], prev.ts[i], remap[p])
        return new

    def _emit(self, tree, goal_i, t0) -> TimedPath:
        idxs = tree.branch(goal_i)
        states = [TimedState(tree.ts[i] - t0, tree.xs[i], tree.ys[i], 0.0) for i in idxs]
        if len(states) == 1:
            return TimedPath(states, 0.0)
        return TimedPath(states, states[-1].t)
