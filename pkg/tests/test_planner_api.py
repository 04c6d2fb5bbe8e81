import math

import pytest

from cbsproto.planner_api import (
    AgentSpec,
    Constraint,
    CoverageTask,
    Dynamics,
    PlanResult,
    StartGoalTask,
    SurveillanceTask,
    task_completed,
    task_from_json_dict,
    task_to_json_dict,
    validate_result,
)
from cbsproto.world import Footprint, SpaceTimeVolume, TimedPath, TimedState

from conftest import assert_close, empty_grid, fc_agent


def straight_volume(x0, x1, speed=1.0, y=1.0, radius=0.2):
    t1 = abs(x1 - x0) / speed
    path = TimedPath([TimedState(0, x0, y, 0), TimedState(t1, x1, y, 0)], t1)
    return SpaceTimeVolume(path, Footprint.circle(radius))


class TestConstraint:
    def test_rejects_bad_interval(self):
        with pytest.raises(ValueError):
            Constraint("a", 1, 1, 0.1, 2.0, 2.0)

    def test_rejects_bad_side(self):
        with pytest.raises(ValueError):
            Constraint("a", 1, 1, 0.0, 0.0, 1.0)

    def test_clipped_shifts_into_bounds(self):
        grid = empty_grid(4.0, 4.0, 1.0)
        c = Constraint.clipped("a", -0.3, 5.0, 0.4, 0.0, 1.0, grid)
        assert_close(c.cx, 0.2)
        assert_close(c.cy, 3.8)

    def test_json_round_trip(self):
        c = Constraint("a", 1.25, 2.5, 0.1, 0.0, 2.5)
        assert Constraint.from_json_dict(c.to_json_dict()) == c

    def test_json_agent_override(self):
        c = Constraint("a", 1.0, 1.0, 0.1, 0.0, 1.0)
        d = c.to_json_dict()
        d.pop("agent_id")
        assert Constraint.from_json_dict(d, agent_id="b").agent_id == "b"


class TestTasks:
    def test_round_trips(self):
        s = TimedState(0, 1.0, 2.0, 0.5)
        tasks = [
            StartGoalTask(s, TimedState(0, 3.0, 4.0, 0.0), 0.2),
            CoverageTask(s, ((1.0, 1.0), (2.0, 3.0)), 0.25),
            SurveillanceTask(s, (5.0, 5.0), 2.0, 10.0, 0.4),
        ]
        for t in tasks:
            assert task_from_json_dict(task_to_json_dict(t)) == t

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            task_from_json_dict({"kind": "herding", "start": [0, 0, 0]})


class TestDynamics:
    def test_unknown_model(self):
        with pytest.raises(ValueError):
            Dynamics("omni", 1.0)

    def test_ackermann_turn_radius(self):
        d = Dynamics("ackermann", 1.0, max_steer=0.6, wheelbase=0.3)
        assert_close(d.turn_radius, 0.3 / math.tan(0.6), 1e-12)

    def test_round_trip(self):
        for d in (
            Dynamics("four_connected", 1.0),
            Dynamics("dubins", 0.8, min_turn_radius=0.5),
            Dynamics("ackermann", 1.0, max_steer=0.6, wheelbase=0.3),
        ):
            assert Dynamics.from_json_dict(d.to_json_dict()) == d


class TestPlanResult:
    def test_success_requires_volume(self):
        with pytest.raises(ValueError):
            PlanResult("success", None, 1.0)

    def test_failure_constructor(self):
        assert PlanResult.failure().status == "failure"
        assert PlanResult.timeout().status == "timeout"


class TestTaskCompleted:
    def test_goal_tolerance(self):
        vol = straight_volume(0.0, 5.0)
        task = StartGoalTask(TimedState(0, 0, 1, 0), TimedState(0, 5.1, 1.0, 0), 0.15)
        assert task_completed(task, vol)
        far = StartGoalTask(TimedState(0, 0, 1, 0), TimedState(0, 5.5, 1.0, 0), 0.15)
        assert not task_completed(far, vol)

    def test_coverage_all_points(self):
        vol = straight_volume(0.0, 5.0)
        ok = CoverageTask(TimedState(0, 0, 1, 0), ((2.0, 1.1), (4.0, 1.0)), 0.2)
        assert task_completed(ok, vol)
        miss = CoverageTask(TimedState(0, 0, 1, 0), ((2.0, 2.0),), 0.2)
        assert not task_completed(miss, vol)
        # the partial flag waives unvisited points
        assert task_completed(miss, vol, partial_coverage=True)

    def test_surveillance_band(self):
        # hold at radius 2 from (0, 0) for the whole makespan
        states = []
        for i in range(101):
            t = i * 0.1
            a = 0.5 * t
            states.append(TimedState(t, 2 * math.cos(a), 2 * math.sin(a), 0.0))
        vol = SpaceTimeVolume(TimedPath(states, 10.0), Footprint.circle(0.1))
        task = SurveillanceTask(TimedState(0, 2, 0, 0), (0.0, 0.0), 2.0, 8.0, 0.3)
        assert task_completed(task, vol)
        short = SurveillanceTask(TimedState(0, 2, 0, 0), (0.0, 0.0), 2.0, 11.0, 0.3)
        assert not task_completed(short, vol)
        off = SurveillanceTask(TimedState(0, 2, 0, 0), (0.0, 0.0), 3.0, 8.0, 0.3)
        assert not task_completed(off, vol)


class TestValidateResult:
    def grid(self):
        return empty_grid(10.0, 3.0, 0.5)

    def agent(self):
        return fc_agent("a", (0.25, 1.25), (5.25, 1.25))

    def result(self):
        t1 = 5.0
        path = TimedPath(
            [TimedState(0, 0.25, 1.25, 0), TimedState(t1, 5.25, 1.25, 0)], t1
        )
        vol = SpaceTimeVolume(path, Footprint.circle(0.2))
        return PlanResult("success", vol, t1)

    def test_clean_result(self):
        assert validate_result(self.agent(), [], self.result(), self.grid()) == []

    def test_rejects_non_success(self):
        with pytest.raises(ValueError):
            validate_result(self.agent(), [], PlanResult.failure(), self.grid())

    def test_start_mismatch(self):
        agent = fc_agent("a", (1.25, 1.25), (5.25, 1.25))
        rules = {v.rule for v in validate_result(agent, [], self.result(), self.grid())}
        assert "start" in rules

    def test_task_incomplete(self):
        agent = fc_agent("a", (0.25, 1.25), (9.25, 1.25))
        rules = {v.rule for v in validate_result(agent, [], self.result(), self.grid())}
        assert "task" in rules

    def test_constraint_violation(self):
        c = Constraint("a", 2.25, 1.25, 0.1, 1.5, 2.5)
        out = validate_result(self.agent(), [c], self.result(), self.grid())
        assert any(v.rule == "constraint" for v in out)

    def test_other_agents_constraints_ignored(self):
        c = Constraint("b", 2.25, 1.25, 0.1, 1.5, 2.5)
        assert validate_result(self.agent(), [c], self.result(), self.grid()) == []

    def test_static_collision(self):
        path = TimedPath(
            [TimedState(0, 0.25, 1.25, 0), TimedState(2.0, 0.25, 2.95, 0)], 2.0
        )
        vol = SpaceTimeVolume(path, Footprint.circle(0.2))
        agent = fc_agent("a", (0.25, 1.25), (0.25, 2.95))
        out = validate_result(agent, [], PlanResult("success", vol, 2.0), self.grid())
        assert any(v.rule == "static" for v in out)

    def test_speed_envelope(self):
        path = TimedPath(
            [TimedState(0, 0.25, 1.25, 0), TimedState(2.0, 5.25, 1.25, 0)], 2.0
        )
        vol = SpaceTimeVolume(path, Footprint.circle(0.2))
        out = validate_result(self.agent(), [], PlanResult("success", vol, 2.0), self.grid())
        assert any(v.rule == "dynamics-envelope" for v in out)

    def test_curvature_bound(self):
        dyn = Dynamics("dubins", 1.0, min_turn_radius=1.0)
        fp = Footprint.circle(0.1)
        # quarter turn at radius 0.5, half the declared minimum
        r = 0.5
        states = []
        n = 30
        for i in range(n + 1):
            a = (math.pi / 2) * i / n
            t = r * a
            states.append(
                TimedState(t, 5 - r + r * math.cos(a), 1.25 + r * math.sin(a), a + math.pi / 2)
            )
        path = TimedPath(states, states[-1].t)
        vol = SpaceTimeVolume(path, fp)
        agent = AgentSpec(
            "a", fp, dyn,
            StartGoalTask(states[0], TimedState(0.0, states[-1].x, states[-1].y, 0.0)),
        )
        out = validate_result(agent, [], PlanResult("success", vol, path.makespan), self.grid())
        assert any(v.rule == "curvature" for v in out)

    def test_curvature_legal_arc_passes(self):
        dyn = Dynamics("dubins", 1.0, min_turn_radius=0.5)
        fp = Footprint.circle(0.1)
        r = 1.0  # twice the minimum: clearly legal
        states = []
        n = 30
        for i in range(n + 1):
            a = (math.pi / 2) * i / n
            t = r * a
            states.append(
                TimedState(t, 5 - r + r * math.cos(a), 1.25 + r * math.sin(a), a + math.pi / 2)
            )
        path = TimedPath(states, states[-1].t)
        vol = SpaceTimeVolume(path, fp)
        agent = AgentSpec(
            "a", fp, dyn,
            StartGoalTask(states[0], TimedState(0.0, states[-1].x, states[-1].y, 0.0)),
        )
        out = validate_result(agent, [], PlanResult("success", vol, path.makespan), self.grid())
        assert not any(v.rule == "curvature" for v in out)
