import math

from cbsproto.planner_api import (
    AgentSpec,
    Constraint,
    Dynamics,
    StartGoalTask,
    validate_result,
)
from cbsproto.planners.rrt import RRTPlanner, _Tree
from cbsproto.world import Footprint, TimedState

from conftest import empty_grid, grid_from_rows


def holonomic_agent(start_xy, goal_xy, radius=0.2, speed=1.0):
    fp = Footprint.circle(radius)
    dyn = Dynamics("none", speed)
    sx, sy = start_xy
    gx, gy = goal_xy
    return AgentSpec(
        "r", fp, dyn,
        StartGoalTask(TimedState(0, sx, sy, 0), TimedState(0, gx, gy, 0)),
        {"planner": "rrt"},
    )


class TestBasics:
    def test_open_space_success_validates(self):
        grid = empty_grid(6.0, 6.0, 0.5)
        agent = holonomic_agent((0.5, 0.5), (5.5, 5.5))
        res = RRTPlanner(agent, grid, seed=3).plan([], 5.0)
        assert res.status == "success"
        assert validate_result(agent, [], res, grid) == []
        # arrival time can never beat the straight-line lower bound
        assert res.cost >= math.hypot(5.0, 5.0) - 1e-6

    def test_around_wall(self):
        grid = grid_from_rows("""
        ....#.....
        ....#.....
        ....#.....
        ..........
        """.replace(" ", ""))
        agent = holonomic_agent((1.0, 1.5), (4.0, 1.5))
        res = RRTPlanner(agent, grid, seed=1).plan([], 5.0)
        assert res.status == "success"
        assert validate_result(agent, [], res, grid) == []

    def test_blocked_start_fails(self):
        grid = grid_from_rows("""
        ...
        #..
        """.replace(" ", ""))
        agent = holonomic_agent((0.25, 0.25), (1.25, 0.75))
        assert RRTPlanner(agent, grid).plan([], 2.0).status == "failure"

    def test_unreachable_goal_does_not_succeed(self):
        grid = grid_from_rows("""
        ...#..
        ...#..
        ...#..
        """.replace(" ", ""))
        agent = holonomic_agent((0.75, 0.75), (2.25, 0.75))
        res = RRTPlanner(agent, grid, seed=0).plan([], 1.5)
        assert res.status in ("failure", "timeout")


class TestDeterminism:
    def test_same_seed_same_path(self):
        grid = empty_grid(6.0, 6.0, 0.5)
        agent = holonomic_agent((0.5, 0.5), (5.5, 0.5))
        a = RRTPlanner(agent, grid, seed=7).plan([], 5.0)
        b = RRTPlanner(agent, grid, seed=7).plan([], 5.0)
        assert a.volume.path.states == b.volume.path.states

    def test_different_seed_different_tree(self):
        grid = empty_grid(6.0, 6.0, 0.5)
        agent = holonomic_agent((0.5, 0.5), (5.5, 0.5))
        pa = RRTPlanner(agent, grid, seed=1)
        pb = RRTPlanner(agent, grid, seed=2)
        pa.plan([], 5.0)
        pb.plan([], 5.0)
        assert pa.last_stats["samples"] != pb.last_stats["samples"] or (
            pa._tree.xs != pb._tree.xs
        )


class TestNearest:
    def test_matches_linear_scan(self):
        import random

        rng = random.Random(5)
        tree = _Tree((3.0, 3.0), 0.0)
        for _ in range(200):
            tree.add(rng.uniform(0, 6), rng.uniform(0, 6), 0.0, 0)
        for _ in range(50):
            qx, qy = rng.uniform(-1, 7), rng.uniform(-1, 7)
            got = tree.nearest(qx, qy)
            want = min(
                range(len(tree)),
                key=lambda i: (tree.xs[i] - qx) ** 2 + (tree.ys[i] - qy) ** 2,
            )
            gd = math.hypot(tree.xs[got] - qx, tree.ys[got] - qy)
            wd = math.hypot(tree.xs[want] - qx, tree.ys[want] - qy)
            assert abs(gd - wd) < 1e-12


class TestExperience:
    def test_prune_audit(self):
        """Every kept edge must be valid; every dropped vertex must hang from
        an invalid edge (directly or through an ancestor)."""
        grid = empty_grid(6.0, 6.0, 0.5)
        agent = holonomic_agent((0.5, 3.0), (5.5, 3.0))
        planner = RRTPlanner(agent, grid, seed=11)
        assert planner.plan([], 5.0).status == "success"
        prev = planner._tree
        cons = [Constraint("r", 3.0, 3.0, 0.8, 0.0, 100.0)]
        new = planner.prune_tree(prev, cons)
        assert 0 < len(new) < len(prev)

        def edge_valid(tree, i):
            p = tree.parent[i]
            return planner._edge_ok(
                tree.xs[p], tree.ys[p], tree.ts[p],
                tree.xs[i], tree.ys[i], tree.ts[i],
                agent.footprint, cons, agent.dynamics.speed,
            )

        for i in range(1, len(new)):
            assert edge_valid(new, i)

        # survivors of the original tree = exactly those whose whole branch
        # is valid; compare survivor vertex sets
        valid_prev = {0}
        for i in range(1, len(prev)):
            if prev.parent[i] in valid_prev and edge_valid(prev, i):
                valid_prev.add(i)
        kept = {(round(new.xs[i], 9), round(new.ys[i], 9)) for i in range(len(new))}
        expect = {
            (round(prev.xs[i], 9), round(prev.ys[i], 9)) for i in valid_prev
        }
        assert kept == expect

    def test_replan_reuses_tree(self):
        grid = empty_grid(6.0, 6.0, 0.5)
        agent = holonomic_agent((0.5, 3.0), (5.5, 3.0))
        planner = RRTPlanner(agent, grid, seed=4)
        assert planner.plan([], 5.0).status == "success"
        cons = [Constraint("r", 3.0, 3.0, 0.4, 0.0, 2.0)]
        res = planner.plan(cons, 5.0)
        assert res.status == "success"
        assert planner.last_stats["reused"] > 1
        assert validate_result(agent, cons, res, grid) == []

    def test_experience_off_keeps_no_tree(self):
        grid = empty_grid(4.0, 4.0, 0.5)
        agent = holonomic_agent((0.5, 0.5), (3.5, 3.5))
        planner = RRTPlanner(agent, grid, params={"experience": False}, seed=0)
        planner.plan([], 5.0)
        assert planner._tree is None


class TestIncompleteness:
    def test_wait_only_solution_fails(self):
        """A goal blocked for a long window has only wait-based solutions;
        the tree has no wait action, so the query must not succeed."""
        grid = grid_from_rows("""
        #####
        ..###
        #####
        """.replace(" ", ""), res=1.0)
        agent = holonomic_agent((0.5, 1.5), (1.5, 1.5), radius=0.3)
        cons = [Constraint("r", 1.5, 1.5, 0.6, 0.0, 3.0)]
        res = RRTPlanner(agent, grid, seed=0, params={"max_samples": 3000}).plan(cons, 3.0)
        assert res.status in ("failure", "timeout")
