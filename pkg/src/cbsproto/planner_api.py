"""The protocol's single point of coupling: constraint and task types, the
plan() contract every planner (built-in or external) must satisfy, and an
independent result validator that checks the contract without access to any
planner's internals.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from . import world
from .world import (
    Footprint,
    OccupancyGrid,
    SpaceTimeVolume,
    TimedState,
    sample_state,
)


@dataclass(frozen=True)
class Constraint:
    """Agent-scoped forbidden spatial square over a time interval."""

    agent_id: str
    cx: float
    cy: float
    side: float
    t_start: float
    t_end: float

    def __post_init__(self):
        if self.t_end <= self.t_start:
            raise ValueError("constraint needs t_end > t_start")
        if self.side <= 0:
            raise ValueError("constraint side must be positive")

    @staticmethod
    def clipped(agent_id, cx, cy, side, t_start, t_end, grid: OccupancyGrid):
        """Construct with the square shifted to lie within map bounds."""
        h = side / 2
        cx = min(max(cx, h), grid.width_m - h)
        cy = min(max(cy, h), grid.height_m - h)
        return Constraint(agent_id, cx, cy, side, t_start, t_end)

    def to_json_dict(self) -> dict:
        return {
            "agent_id": self.agent_id,
            "cx": self.cx,
            "cy": self.cy,
            "side": self.side,
            "t_start": self.t_start,
            "t_end": self.t_end,
        }

    @staticmethod
    def from_json_dict(d: dict, agent_id=None) -> "Constraint":
        return Constraint(
            agent_id if agent_id is not None else d.get("agent_id", ""),
            float(d["cx"]),
            float(d["cy"]),
            float(d["side"]),
            float(d["t_start"]),
            float(d["t_end"]),
        )


# ---------------------------------------------------------------------------
# tasks

COVERAGE_WAYPOINT_CAP = 50  # emitted waypoints at 0.1 s granularity


@dataclass(frozen=True)
class StartGoalTask:
    start: TimedState  # t is ignored (plans begin at scenario time zero)
    goal: TimedState
    goal_tolerance: float = 0.15

    kind = "start_goal"


@dataclass(frozen=True)
class CoverageTask:
    start: TimedState
    points: tuple  # (x, y) pairs
    visit_tolerance: float = 0.2

    kind = "coverage"


@dataclass(frozen=True)
class SurveillanceTask:
    start: TimedState
    center: tuple  # (x, y)
    radius: float
    duration: float
    band: float = 0.3

    kind = "surveillance"


def task_to_json_dict(task) -> dict:
    s = task.start
    if task.kind == "start_goal":
        g = task.goal
        return {
            "kind": "start_goal",
            "start": [s.x, s.y, s.theta],
            "goal": [g.x, g.y, g.theta],
            "goal_tolerance": task.goal_tolerance,
        }
    if task.kind == "coverage":
        return {
            "kind": "coverage",
            "start": [s.x, s.y, s.theta],
            "points": [list(p) for p in task.points],
            "visit_tolerance": task.visit_tolerance,
        }
    return {
        "kind": "surveillance",
        "start": [s.x, s.y, s.theta],
        "center": list(task.center),
        "radius": task.radius,
        "duration": task.duration,
        "band": task.band,
    }


def task_from_json_dict(d: dict):
    kind = d.get("kind")
    sx, sy, sth = d["start"]
    start = TimedState(0.0, float(sx), float(sy), float(sth))
    if kind == "start_goal":
        gx, gy, gth = d["goal"]
        return StartGoalTask(
            start,
            TimedState(0.0, float(gx), float(gy), float(gth)),
            float(d.get("goal_tolerance", 0.15)),
        )
    if kind == "coverage":
        return CoverageTask(
            start,
            tuple((float(p[0]), float(p[1])) for p in d["points"]),
            float(d.get("visit_tolerance", 0.2)),
        )
    if kind == "surveillance":
        return SurveillanceTask(
            start,
            (float(d["center"][0]), float(d["center"][1])),
            float(d["radius"]),
            float(d["duration"]),
            float(d.get("band", 0.3)),
        )
    raise ValueError(f"unknown task kind {kind!r}")


# ---------------------------------------------------------------------------
# dynamics and agent specs


@dataclass(frozen=True)
class Dynamics:
    """Motion model: 'four_connected', 'dubins', 'ackermann' or 'none'."""

    model: str
    speed: float
    min_turn_radius: float = 0.0  # dubins
    max_steer: float = 0.0  # ackermann, radians
    wheelbase: float = 0.0  # ackermann

    def __post_init__(self):
        if self.model not in ("four_connected", "dubins", "ackermann", "none"):
            raise ValueError(f"unknown dynamics model {self.model!r}")
        if self.speed <= 0:
            raise ValueError("speed must be positive")

    @property
    def turn_radius(self) -> float:
        if self.model == "dubins":
            return self.min_turn_radius
        if self.model == "ackermann":
            return self.wheelbase / math.tan(self.max_steer)
        return 0.0

    def to_json_dict(self) -> dict:
        d = {"model": self.model, "speed": self.speed}
        if self.model == "dubins":
            d["min_turn_radius"] = self.min_turn_radius
        elif self.model == "ackermann":
            d["max_steer"] = self.max_steer
            d["wheelbase"] = self.wheelbase
        return d

    @staticmethod
    def from_json_dict(d: dict) -> "Dynamics":
        return Dynamics(
            d["model"],
            float(d["speed"]),
            float(d.get("min_turn_radius", 0.0)),
            float(d.get("max_steer", 0.0)),
            float(d.get("wheelbase", 0.0)),
        )


@dataclass(frozen=True)
class AgentSpec:
    agent_id: str
    footprint: Footprint
    dynamics: Dynamics
    task: object
    planner: dict = field(default_factory=lambda: {"planner": "astar"})
    per_query_timeout: float = 10.0

    @property
    def start(self) -> TimedState:
        s = self.task.start
        return TimedState(0.0, s.x, s.y, s.theta)

    def to_json_dict(self) -> dict:
        return {
            "agent_id": self.agent_id,
            "footprint": self.footprint.to_json_dict(),
            "dynamics": self.dynamics.to_json_dict(),
            "task": task_to_json_dict(self.task),
            "planner": self.planner,
            "per_query_timeout": self.per_query_timeout,
        }

    @staticmethod
    def from_json_dict(d: dict) -> "AgentSpec":
        return AgentSpec(
            agent_id=str(d["agent_id"]),
            footprint=Footprint.from_json_dict(d["footprint"]),
            dynamics=Dynamics.from_json_dict(d["dynamics"]),
            task=task_from_json_dict(d["task"]),
            planner=dict(d.get("planner", {"planner": "astar"})),
            per_query_timeout=float(d.get("per_query_timeout", 10.0)),
        )


# ---------------------------------------------------------------------------
# plan results

SUCCESS = "success"
FAILURE = "failure"
TIMEOUT = "timeout"


@dataclass(frozen=True)
class PlanResult:
    status: str
    volume: SpaceTimeVolume | None = None
    cost: float = 0.0
    partial_coverage: bool = False

    def __post_init__(self):
        if self.status == SUCCESS:
            if self.volume is None:
                raise ValueError("success result needs a volume")
            if not math.isfinite(self.cost):
                raise ValueError("success result needs a finite cost")

    @staticmethod
    def failure() -> "PlanResult":
        return PlanResult(FAILURE)

    @staticmethod
    def timeout() -> "PlanResult":
        return PlanResult(TIMEOUT)


# ---------------------------------------------------------------------------
# independent validation


@dataclass(frozen=True)
class Violation:
    rule: str  # start | task | constraint | static | dynamics-envelope | curvature
    t: float
    x: float
    y: float
    detail: str = ""


SPEED_SLACK = 1.01
TURN_RADIUS_SLACK = 0.99
CHECK_DT = 0.1


def task_completed(task, vol: SpaceTimeVolume, partial_coverage=False) -> bool:
    path = vol.path
    if task.kind == "start_goal":
        end = path.states[-1]
        return (
            math.hypot(end.x - task.goal.x, end.y - task.goal.y)
            <= task.goal_tolerance + 1e-9
        )
    if task.kind == "coverage":
        if partial_coverage:
            return True
        times = _sample_times(path.makespan)
        for px, py in task.points:
            if not any(
                math.hypot(s.x - px, s.y - py) <= task.visit_tolerance + 1e-9
                for s in (sample_state(path, t) for t in times)
            ):
                return False
        return True
    if task.kind == "surveillance":
        if path.makespan + 1e-9 < task.duration:
            return False
        t0 = path.makespan - task.duration
        cx, cy = task.center
        for t in _sample_times(task.duration):
            s = sample_state(path, t0 + t)
            r = math.hypot(s.x - cx, s.y - cy)
            if abs(r - task.radius) > task.band + 1e-9:
                return False
        return True
    raise ValueError(f"unknown task kind {task.kind!r}")


def _sample_times(makespan: float, dt: float = CHECK_DT):
    n = max(1, math.ceil(makespan / dt - 1e-9))
    times = [i * dt for i in range(n)]
    times.append(makespan)
    return times


def _curvature_violations(agent: AgentSpec, path, out: list):
    r_min = agent.dynamics.turn_radius
    if r_min <= 0:
        return
    # windowed estimate: heading change vs chord over ~0.3 m windows;
    # pointwise estimates on interpolated paths are too noisy to check 1% slack
    window = 0.3
    states = path.states
    cum = [0.0]
    for a, b in zip(states, states[1:]):
        cum.append(cum[-1] + math.hypot(b.x - a.x, b.y - a.y))
    i = 0
    for j in range(1, len(states)):
        chord = 0.0
        while i < j and (
            chord := math.hypot(states[j].x - states[i].x, states[j].y - states[i].y)
        ) > window:
            i += 1
        if i == j or chord < window * 0.5:
            continue
        # windows where the path doubles back (reverse maneuvers) have no
        # single turning circle; skip them
        if cum[j] - cum[i] > chord * 1.3:
            continue
        dth = abs(world.wrap_angle(states[j].theta - states[i].theta))
        if dth < 1e-9 or dth >= math.pi:
            continue
        # chord of a circular arc: c = 2 r sin(dtheta / 2)
        radius = chord / (2 * math.sin(dth / 2))
        if radius < r_min * TURN_RADIUS_SLACK:
            out.append(
                Violation(
                    "curvature",
                    states[j].t,
                    states[j].x,
                    states[j].y,
                    f"estimated turn radius {radius:.3f} < {r_min:.3f}",
                )
            )
            return


def validate_result(
    agent: AgentSpec,
    constraints,
    result: PlanResult,
    grid: OccupancyGrid,
) -> list:
    """Audit a Success result against the plan() contract.

    Returns a list of Violation records; empty iff the result (a) starts at
    the agent's start at t=0, (b) completes the task, (c) violates no
    constraint at 0.1 s sampling, (d) never static-collides, and respects the
    declared speed envelope (and turn radius for dubins/ackermann).
    """
    if result.status != SUCCESS:
        raise ValueError("validate_result expects a Success result")
    vol = result.volume
    path = vol.path
    out: list[Violation] = []

    s0 = path.states[0]
    start = agent.start
    if math.hypot(s0.x - start.x, s0.y - start.y) > 1e-6 or abs(s0.t) > 1e-9:
        out.append(Violation("start", s0.t, s0.x, s0.y, "path does not begin at the agent start"))

    if not task_completed(agent.task, vol, result.partial_coverage):
        end = path.states[-1]
        out.append(Violation("task", end.t, end.x, end.y, "task completion predicate failed"))

    for c in constraints:
        if c.agent_id != agent.agent_id:
            continue
        if world.violates_constraint(vol, c, CHECK_DT):
            # locate the first violating sample for the record
            t = c.t_start
            while t <= c.t_end + 1e-9:
                tt = min(t, c.t_end)
                pose = sample_state(path, tt)
                if world.footprint_hits_square(vol.footprint, pose, c.cx, c.cy, c.side):
                    out.append(
                        Violation(
                            "constraint", tt, pose.x, pose.y,
                            f"square ({c.cx:.2f},{c.cy:.2f}) during [{c.t_start:.2f},{c.t_end:.2f}]",
                        )
                    )
                    break
                t += CHECK_DT

    for t in _sample_times(path.makespan):
        pose = sample_state(path, t)
        if world.static_collides(grid, vol.footprint, pose):
            out.append(Violation("static", t, pose.x, pose.y, "footprint hits obstacle or map edge"))
            break

    vmax = agent.dynamics.speed * SPEED_SLACK
    for a, b in zip(path.states, path.states[1:]):
        step = math.hypot(b.x - a.x, b.y - a.y)
        if step > vmax * (b.t - a.t) + 1e-9:
            out.append(
                Violation(
                    "dynamics-envelope", b.t, b.x, b.y,
                    f"step {step:.3f} m in {b.t - a.t:.3f} s exceeds speed {agent.dynamics.speed}",
                )
            )
            break

    _curvature_violations(agent, path, out)
    return out
