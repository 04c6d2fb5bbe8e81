"""Multi-point coverage by chaining single-segment queries.

Plans to the nearest unvisited point, appends the segment time-shifted to
absolute time, and repeats. Emitted paths are capped at 50 waypoints; hitting
the cap truncates the path and reports success with a partial-coverage flag.
"""
from __future__ import annotations

import math
import time as _time

from ..planner_api import COVERAGE_WAYPOINT_CAP, SUCCESS, PlanResult
from ..world import SpaceTimeVolume, TimedPath, TimedState


class CoveragePlanner:
    """Wraps a planner exposing search(start, t0, goal_xy, tol, ...)."""

    def __init__(self, inner, agent):
        if agent.task.kind != "coverage":
            raise ValueError("CoveragePlanner requires a coverage task")
        self.inner = inner
        self.agent = agent
        self.last_stats = {}

    def plan(self, constraints, deadline) -> PlanResult:
        t_limit = _time.monotonic() + deadline
        task = self.agent.task
        tol = task.visit_tolerance
        pending = list(task.points)
        cur = self.agent.start
        t_abs = 0.0
        states = [TimedState(0.0, cur.x, cur.y, cur.theta)]
        segments = 0

        while pending:
            pending = [
                p for p in pending if math.hypot(p[0] - cur.x, p[1] - cur.y) > tol
            ]
            if not pending:
                break
            target = min(pending, key=lambda p: math.hypot(p[0] - cur.x, p[1] - cur.y))
            remaining = t_limit - _time.monotonic()
            if remaining <= 0:
                self.last_stats = {"segments": segments}
                return PlanResult.timeout()
            res = self.inner.search(
                cur, t_abs, (target[0], target[1]), tol, constraints, remaining
            )
            segments += 1
            if res.status != SUCCESS:
                self.last_stats = {"segments": segments}
                return PlanResult(res.status, None, 0.0)
            seg = res.volume.path.states
            for s in seg[1:]:
                states.append(TimedState(t_abs + s.t, s.x, s.y, s.theta))
            last = states[-1]
            cur = TimedState(0.0, last.x, last.y, last.theta)
            t_abs = last.t

        partial = False
        if len(states) > COVERAGE_WAYPOINT_CAP:
            states = states[:COVERAGE_WAYPOINT_CAP]
            partial = True
        path = TimedPath(states, states[-1].t)
        self.last_stats = {"segments": segments}
        return PlanResult(
            SUCCESS, SpaceTimeVolume(path, self.agent.footprint), path.cost,
            partial_coverage=partial,
        )
