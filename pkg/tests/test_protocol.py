import math

import pytest

from cbsproto.planner_api import Constraint
from cbsproto.protocol import (
    CBSSolver,
    Conflict,
    SolveLimits,
    detect_conflicts,
    get_constraints,
    representative_point,
    solve,
)
from cbsproto.world import Footprint, SpaceTimeVolume, TimedPath, TimedState

from conftest import (
    assert_close,
    corridor_grid,
    corridor_swap_agents,
    empty_grid,
    fc_agent,
)


class TestSolveLimits:
    def test_defaults(self):
        lim = SolveLimits()
        assert lim.wall_clock == 120.0
        assert lim.max_ct_nodes == 10_000
        assert lim.collision_dt == 0.1
        assert lim.constraint_side == 0.1
        assert lim.constraint_duration == 2.5

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            SolveLimits(collision_dt=0.0)
        with pytest.raises(ValueError):
            SolveLimits(max_ct_nodes=0)


class TestRepresentativePoint:
    def test_symmetric_lens_centroid(self):
        fp = Footprint.circle(0.3)
        a = TimedState(0, 0.0, 0.0, 0)
        b = TimedState(0, 0.2, 0.0, 0)
        p = representative_point(fp, a, fp, b)
        assert abs(p[0] - 0.1) <= 0.02
        assert abs(p[1]) <= 0.02

    def test_grazing_contact_midpoint(self):
        fp = Footprint.circle(0.2)
        a = TimedState(0, 0.0, 0.0, 0)
        b = TimedState(0, 0.4, 0.0, 0)
        p = representative_point(fp, a, fp, b)
        assert_close(p[0], 0.2, 1e-9)
        assert_close(p[1], 0.0, 1e-9)

    def test_asymmetric_overlap_inside_both(self):
        big = Footprint.circle(0.5)
        small = Footprint.circle(0.1)
        a = TimedState(0, 0.0, 0.0, 0)
        b = TimedState(0, 0.55, 0.0, 0)
        px, py = representative_point(big, a, small, b)
        assert math.hypot(px - 0.0, py - 0.0) <= 0.5 + 1e-6
        assert math.hypot(px - 0.55, py - 0.0) <= 0.1 + 1e-6


def straight_vol(x0, x1, y, speed=1.0, r=0.2, aid_theta=0.0):
    t1 = abs(x1 - x0) / speed
    path = TimedPath([TimedState(0, x0, y, aid_theta), TimedState(t1, x1, y, aid_theta)], t1)
    return SpaceTimeVolume(path, Footprint.circle(r))


class TestDetectConflicts:
    def test_head_on_pair(self):
        vols = {
            "a": straight_vol(0.0, 4.0, 1.0),
            "b": straight_vol(4.0, 0.0, 1.0),
        }
        out = detect_conflicts(vols, 0.1)
        assert len(out) == 1
        c = out[0]
        assert (c.agent_a, c.agent_b) == ("a", "b")
        # circles of radius 0.2 closing at 2 m/s touch at t = (4 - 0.4) / 2
        assert 1.7 <= c.t0 <= 1.9 + 1e-9
        assert abs(c.p0[0] - 2.0) < 0.15

    def test_first_overlap_only_per_pair(self):
        vols = {
            "a": straight_vol(0.0, 4.0, 1.0),
            "b": straight_vol(4.0, 0.0, 1.0),
        }
        out = detect_conflicts(vols, 0.1)
        # agents keep overlapping for many samples; only one event reported
        assert len(out) == 1

    def test_rest_pose_conflicts_detected(self):
        vols = {
            "a": straight_vol(0.0, 2.0, 1.0),  # rests at (2, 1) after t=2
            "b": SpaceTimeVolume(
                TimedPath([TimedState(0, 2.0, 3.0, 0), TimedState(2.0, 2.0, 1.0, 0)], 2.0),
                Footprint.circle(0.2),
            ),
        }
        out = detect_conflicts(vols, 0.1)
        assert len(out) == 1
        assert out[0].t0 <= 2.0

    def test_sorted_by_time_then_ids(self):
        vols = {
            "a": straight_vol(0.0, 4.0, 1.0),
            "b": straight_vol(4.0, 0.0, 1.0),
            "c": straight_vol(0.0, 4.0, 1.0),  # identical to a: immediate conflict
        }
        out = detect_conflicts(vols, 0.1)
        assert out[0].agent_a == "a" and out[0].agent_b == "c"
        assert out[0].t0 == 0.0
        times = [c.t0 for c in out]
        assert times == sorted(times)

    def test_fine_dt_brackets_contact(self):
        vols = {
            "a": straight_vol(0.0, 4.0, 1.0),
            "b": straight_vol(4.0, 0.0, 1.0),
        }
        coarse = detect_conflicts(vols, 0.1)[0].t0
        fine = detect_conflicts(vols, 0.01)[0].t0
        exact = 1.8  # (4 - 2 * 0.2) / 2
        assert fine <= coarse + 1e-9
        assert abs(fine - exact) <= 0.01 + 1e-9
        assert abs(coarse - exact) <= 0.1 + 1e-9

    def test_rejects_bad_dt(self):
        with pytest.raises(ValueError):
            detect_conflicts({}, 0.0)


class TestGetConstraints:
    def test_interior_point_cell(self):
        lim = SolveLimits()
        ca, cb = get_constraints(Conflict("a", "b", 6.0, (3.07, 4.12)), lim)
        for c in (ca, cb):
            assert_close(c.cx, 3.05, 1e-9)
            assert_close(c.cy, 4.15, 1e-9)
            assert_close(c.side, 0.1, 1e-12)
            assert_close(c.t_start, 6.0)
            assert_close(c.t_end, 8.5)
        assert ca.agent_id == "a" and cb.agent_id == "b"

    def test_lattice_line_goes_to_larger_cell(self):
        lim = SolveLimits()
        ca, _ = get_constraints(Conflict("a", "b", 0.0, (3.10, 4.10)), lim)
        assert_close(ca.cx, 3.15, 1e-9)
        assert_close(ca.cy, 4.15, 1e-9)

    def test_clipped_to_map(self):
        grid = empty_grid(5.0, 5.0, 0.5)
        lim = SolveLimits(constraint_side=0.4)
        ca, _ = get_constraints(Conflict("a", "b", 0.0, (0.01, 4.99)), lim, grid)
        assert_close(ca.cx, 0.2)
        assert_close(ca.cy, 4.8)


class TestSolver:
    def crossing(self):
        # perpendicular crossing through the center of an empty map
        a = fc_agent("a", (0.25, 2.25), (4.25, 2.25))
        b = fc_agent("b", (2.25, 0.25), (2.25, 4.25))
        return [a, b], empty_grid(4.5, 4.5, 0.5)

    def test_crossing_solved_and_validated(self):
        agents, grid = self.crossing()
        solver = CBSSolver(agents, grid, validate_nodes=True)
        sol = solver.solve()
        assert sol.ok
        assert not detect_conflicts(
            {aid: r.volume for aid, r in sol.results.items()}, 0.1
        )
        assert sol.stats["root_conflicts"] >= 1
        assert sol.stats["ct_generated"] >= 2

    def test_corridor_swap(self):
        sol = solve(corridor_swap_agents(), corridor_grid(), SolveLimits(wall_clock=30))
        assert sol.ok

    def test_duplicate_and_invalid_inputs(self):
        agents, grid = self.crossing()
        with pytest.raises(ValueError):
            CBSSolver([], grid)
        with pytest.raises(ValueError):
            CBSSolver([agents[0], agents[0]], grid)
        with pytest.raises(ValueError):
            CBSSolver(agents, grid, mode="depth_first")

    def test_root_infeasible(self):
        from conftest import grid_from_rows

        grid = grid_from_rows("""
        ..#..
        ..#..
        """.replace(" ", ""))
        agents = [fc_agent("a", (0.25, 0.25), (2.25, 0.25))]
        sol = solve(agents, grid, SolveLimits(wall_clock=5))
        assert sol.status == "root_infeasible"
        assert sol.failed_agent == "a"
        assert sol.results == {}

    def test_node_budget(self):
        agents = corridor_swap_agents()
        sol = solve(agents, corridor_grid(), SolveLimits(wall_clock=30, max_ct_nodes=3))
        assert sol.status == "node_budget_exhausted"

    def test_wall_clock_timeout(self):
        agents = corridor_swap_agents()
        sol = solve(agents, corridor_grid(), SolveLimits(wall_clock=0.15))
        assert sol.status in ("timeout", "root_infeasible")

    def test_single_agent_trivial(self):
        agents = [fc_agent("solo", (0.25, 0.25), (2.25, 0.25))]
        sol = solve(agents, empty_grid(3.0, 1.0, 0.5))
        assert sol.ok
        assert sol.stats["ct_generated"] == 1
        assert sol.stats["ct_expanded"] == 0
        assert_close(sol.sum_cost(), 2.0, 1e-6)


class TestExpansionStructure:
    def test_children_differ_by_one_constraint(self):
        a = fc_agent("a", (0.25, 2.25), (4.25, 2.25))
        b = fc_agent("b", (2.25, 0.25), (2.25, 4.25))
        grid = empty_grid(4.5, 4.5, 0.5)
        solver = CBSSolver([a, b], grid, keep_trace=True)
        sol = solver.solve()
        assert sol.ok
        assert solver.trace
        for parent, child, aid, con in solver.trace:
            assert child.parent_id == parent.node_id
            assert con.agent_id == aid
            assert child.constraints[aid] == parent.constraints[aid] + (con,)
            conflict = parent.conflicts[0]
            assert aid in (conflict.agent_a, conflict.agent_b)
            other = [x for x in solver.order if x != aid]
            for o in other:
                assert child.constraints[o] == parent.constraints[o]
                assert child.results[o] is parent.results[o]
            # the replanned path must respect the new constraint
            from cbsproto.planner_api import validate_result

            assert validate_result(
                solver.agents[aid], list(child.constraints[aid]),
                child.results[aid], grid,
            ) == []

    def test_pop_order_matches_priority(self):
        agents = corridor_swap_agents()
        solver = CBSSolver(
            agents, corridor_grid(), SolveLimits(wall_clock=30), keep_trace=True
        )
        assert solver.solve().ok
        assert len(solver.pop_trace) >= 2
        for prio, best_left in solver.pop_trace:
            if best_left is not None:
                assert prio <= best_left

    def test_optimal_mode_orders_by_cost(self):
        agents = corridor_swap_agents()
        solver = CBSSolver(
            agents, corridor_grid(), SolveLimits(wall_clock=60), mode="optimal",
            keep_trace=True,
        )
        sol = solver.solve()
        assert sol.ok
        costs = [prio[0] for prio, _ in solver.pop_trace]
        assert costs == sorted(costs)
        greedy = solve(corridor_swap_agents(), corridor_grid(), SolveLimits(wall_clock=30))
        # an optimal-ordered search can never finish with a worse sum
        assert sol.sum_cost() <= greedy.sum_cost() + 1e-6


class TestSolutionJson:
    def test_round_trip_fields(self):
        agents = [fc_agent("solo", (0.25, 0.25), (2.25, 0.25))]
        sol = solve(agents, empty_grid(3.0, 1.0, 0.5))
        d = sol.to_json_dict(agents)
        assert d["status"] == "success"
        assert d["agents"][0]["id"] == "solo"
        assert d["agents"][0]["path"][0] == [0.0, 0.25, 0.25, 0.0]
        assert d["constraints_used"] == []
        assert "ct_generated" in d["stats"]
