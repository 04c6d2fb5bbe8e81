import json
import math
import random

import pytest

from cbsproto import world
from cbsproto.world import (
    Footprint,
    MapFormatError,
    OccupancyGrid,
    SpaceTimeVolume,
    TimedPath,
    TimedState,
    load_map,
    sample_state,
    save_map,
    wrap_angle,
)

from conftest import assert_close, empty_grid, grid_from_rows


class TestMapFormat:
    def test_round_trip(self):
        grid = grid_from_rows("""
        ..#
        #..
        """.replace(" ", ""), res=1.0)
        again = load_map(save_map(grid))
        assert again == grid

    def test_malformed_json(self):
        with pytest.raises(MapFormatError):
            load_map("not json{")

    def test_missing_field(self):
        with pytest.raises(MapFormatError):
            load_map(json.dumps({"width_m": 1, "height_m": 1, "cells": []}))

    def test_cell_count_mismatch(self):
        with pytest.raises(MapFormatError):
            load_map(json.dumps({
                "name": "bad", "width_m": 2.0, "height_m": 1.0,
                "resolution_m": 1.0, "cells": [0, 0, 0],
            }))

    def test_out_of_range_is_occupied(self):
        grid = empty_grid(2.0, 2.0, 1.0)
        assert grid.occupied(-1, 0)
        assert grid.occupied(0, 2)
        assert not grid.occupied(*grid.cell_of(0.5, 0.5))


class TestFootprint:
    def test_circle_area_and_circumradius(self):
        fp = Footprint.circle(0.3)
        assert_close(fp.area(), math.pi * 0.09, 1e-12)
        assert_close(fp.circumradius, 0.3)

    def test_rectangle_vertices(self):
        fp = Footprint.rectangle(0.8, 0.3)
        vs = fp.canonical_vertices()
        assert len(vs) == 4
        assert_close(fp.area(), 0.24, 1e-12)
        assert_close(fp.circumradius, math.hypot(0.4, 0.15), 1e-12)

    def test_triangle_centered(self):
        fp = Footprint.triangle(0.6, 0.4)
        vs = fp.canonical_vertices()
        cx = sum(v[0] for v in vs) / 3
        cy = sum(v[1] for v in vs) / 3
        assert abs(cx) < 1e-12 and abs(cy) < 1e-12
        assert_close(fp.area(), 0.12, 1e-12)

    def test_json_round_trip(self):
        for fp in (Footprint.circle(0.2), Footprint.rectangle(0.4, 0.1),
                   Footprint.triangle(0.6, 0.4)):
            assert Footprint.from_json_dict(fp.to_json_dict()) == fp


class TestTimedPath:
    def path(self):
        return TimedPath(
            [TimedState(0, 0, 0, 0), TimedState(1, 1, 0, 0), TimedState(2, 1, 1, math.pi / 2)],
            2.0,
        )

    def test_rejects_unsorted_times(self):
        with pytest.raises(ValueError):
            TimedPath([TimedState(0, 0, 0, 0), TimedState(0, 1, 0, 0)], 1.0)

    def test_rejects_nonzero_start(self):
        with pytest.raises(ValueError):
            TimedPath([TimedState(0.5, 0, 0, 0)], 1.0)

    def test_interpolation(self):
        p = self.path()
        s = sample_state(p, 0.5)
        assert_close(s.x, 0.5)
        assert_close(s.y, 0.0)

    def test_rest_at_goal(self):
        p = self.path()
        s = sample_state(p, 100.0)
        assert (s.x, s.y) == (1.0, 1.0)
        assert_close(s.theta, math.pi / 2)

    def test_theta_shortest_arc(self):
        p = TimedPath(
            [TimedState(0, 0, 0, math.radians(170)), TimedState(1, 0, 0, math.radians(-170))],
            1.0,
        )
        s = sample_state(p, 0.5)
        assert_close(wrap_angle(s.theta - math.pi), 0.0, 1e-9)


def _sampling_overlap_oracle(fpa, pa, fpb, pb, n=10000, seed=0):
    """Random points inside shape A tested for membership in shape B."""
    rng = random.Random(seed)
    ga = world.footprint_polygon(fpa, pa)
    gb = world.footprint_polygon(fpb, pb)

    def contains(poly, x, y):
        if poly[0] == "circle":
            return (x - poly[1]) ** 2 + (y - poly[2]) ** 2 <= poly[3] ** 2
        return world.point_in_polygon(x, y, poly)

    def bbox(poly):
        if poly[0] == "circle":
            _, cx, cy, r = poly
            return cx - r, cy - r, cx + r, cy + r
        xs = [p[0] for p in poly]
        ys = [p[1] for p in poly]
        return min(xs), min(ys), max(xs), max(ys)

    x0, y0, x1, y1 = bbox(ga)
    for _ in range(n):
        x = rng.uniform(x0, x1)
        y = rng.uniform(y0, y1)
        if contains(ga, x, y) and contains(gb, x, y):
            return True
    return False


class TestOverlaps:
    def test_disjoint_circles(self):
        fp = Footprint.circle(0.2)
        a = TimedState(0, 0, 0, 0)
        b = TimedState(0, 1, 0, 0)
        assert not world.overlaps(fp, a, fp, b)

    def test_contact_counts(self):
        fp = Footprint.circle(0.2)
        assert world.overlaps(fp, TimedState(0, 0, 0, 0), fp, TimedState(0, 0.4, 0, 0))

    def test_rotated_rectangles_agree_with_sampling(self):
        fpa = Footprint.rectangle(0.8, 0.3)
        fpb = Footprint.rectangle(0.4, 0.1)
        rng = random.Random(7)
        for i in range(60):
            pa = TimedState(0, rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-3, 3))
            pb = TimedState(0, rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-3, 3))
            got = world.overlaps(fpa, pa, fpb, pb)
            oracle = _sampling_overlap_oracle(fpa, pa, fpb, pb, n=4000, seed=i)
            if oracle:
                # sampling can only prove overlap, never disprove it
                assert got

    def test_circle_vs_triangle(self):
        fpa = Footprint.circle(0.25)
        fpb = Footprint.triangle(0.6, 0.4)
        assert world.overlaps(fpa, TimedState(0, 0.3, 0, 0), fpb, TimedState(0, 0, 0, 0))
        assert not world.overlaps(fpa, TimedState(0, 2.0, 0, 0), fpb, TimedState(0, 0, 0, 0))


class TestStaticCollides:
    def test_boundary_contact_is_collision(self):
        grid = empty_grid(2.0, 2.0, 0.5)
        fp = Footprint.circle(0.25)
        assert world.static_collides(grid, fp, TimedState(0, 0.25, 1.0, 0))
        assert not world.static_collides(grid, fp, TimedState(0, 0.3, 1.0, 0))

    def test_occupied_cell(self):
        grid = grid_from_rows("""
        ....
        .#..
        ....
        """.replace(" ", ""))
        # occupied cell spans x [0.5, 1.0], y [0.5, 1.0]
        fp = Footprint.circle(0.2)
        assert world.static_collides(grid, fp, TimedState(0, 0.75, 0.75, 0))
        assert not world.static_collides(grid, fp, TimedState(0, 1.45, 0.25, 0))

    def test_rotated_rectangle_near_wall(self):
        grid = grid_from_rows("""
        ..#
        ...
        """.replace(" ", ""), res=1.0)
        fp = Footprint.rectangle(1.2, 0.2)
        # horizontal fits under the occupied cell, vertical pokes into it
        assert not world.static_collides(grid, fp, TimedState(0, 1.5, 0.5, 0.0))
        assert world.static_collides(grid, fp, TimedState(0, 2.5, 1.2, math.pi / 2))


class TestConstraints:
    def vol(self):
        path = TimedPath(
            [TimedState(0, 0.0, 1.0, 0), TimedState(4, 4.0, 1.0, 0)], 4.0
        )
        return SpaceTimeVolume(path, Footprint.circle(0.1))

    def test_violation_inside_window(self):
        assert world.violates_constraint(self.vol(), _c(2.0, 1.0, 0.1, 1.5, 2.5))

    def test_clean_outside_window(self):
        assert not world.violates_constraint(self.vol(), _c(2.0, 1.0, 0.1, 3.5, 4.0))

    def test_rest_pose_checked_after_makespan(self):
        assert world.violates_constraint(self.vol(), _c(4.0, 1.0, 0.2, 10.0, 11.0))

    def test_spatially_clear(self):
        assert not world.violates_constraint(self.vol(), _c(2.0, 3.0, 0.1, 0.0, 4.0))


def _c(cx, cy, side, t0, t1):
    from cbsproto.planner_api import Constraint

    return Constraint("a", cx, cy, side, t0, t1)


class TestClearance:
    def test_two_circles(self):
        fp = Footprint.circle(0.2)
        d = world.placed_clearance(fp, TimedState(0, 0, 0, 0), fp, TimedState(0, 1, 0, 0))
        assert_close(d, 0.6, 1e-12)

    def test_overlap_is_zero(self):
        fp = Footprint.circle(0.3)
        assert world.placed_clearance(
            fp, TimedState(0, 0, 0, 0), fp, TimedState(0, 0.2, 0, 0)
        ) == 0.0

    def test_circle_rectangle(self):
        c = Footprint.circle(0.1)
        r = Footprint.rectangle(0.4, 0.2)
        d = world.placed_clearance(
            c, TimedState(0, 1.0, 0.0, 0.0), r, TimedState(0, 0.0, 0.0, 0.0)
        )
        assert_close(d, 1.0 - 0.2 - 0.1, 1e-9)
