import math

import pytest

from cbsproto.planner_api import AgentSpec, Dynamics, StartGoalTask
from cbsproto.world import Footprint, OccupancyGrid, TimedState


def empty_grid(width_m=10.0, height_m=15.0, res=0.5, name="empty"):
    cols = round(width_m / res)
    rows = round(height_m / res)
    return OccupancyGrid(width_m, height_m, res, tuple([0] * (cols * rows)), name)


def grid_from_rows(rows_str, res=0.5, name="ascii"):
    """Build a grid from ascii art; '#' is occupied, row 0 is the TOP."""
    rows = [r for r in rows_str.strip().splitlines()]
    height = len(rows)
    width = len(rows[0])
    assert all(len(r) == width for r in rows)
    cells = []
    for y in range(height):
        src = rows[height - 1 - y]  # grid row 0 is the bottom
        cells.extend(1 if ch == "#" else 0 for ch in src)
    return OccupancyGrid(width * res, height * res, res, tuple(cells), name)


# single-lane corridor with one side pocket halfway; two agents that swap
# ends cannot pass each other without one ducking into the pocket
CORRIDOR_ROWS = """
##################
########.#########
..................
##################
"""


def corridor_grid():
    return grid_from_rows(CORRIDOR_ROWS, name="corridor")


def corridor_swap_agents(footprint=None, speed=1.0):
    fp = footprint or Footprint.circle(0.2)
    dyn = Dynamics("four_connected", speed)
    y = 0.75
    left = TimedState(0.0, 0.25, y, 0.0)
    right = TimedState(0.0, 8.75, y, 0.0)
    return [
        AgentSpec("a0", fp, dyn, StartGoalTask(left, right)),
        AgentSpec("a1", fp, dyn, StartGoalTask(right, left)),
    ]


def fc_agent(agent_id, start_xy, goal_xy, radius=0.2, speed=1.0, planner=None):
    fp = Footprint.circle(radius)
    dyn = Dynamics("four_connected", speed)
    sx, sy = start_xy
    gx, gy = goal_xy
    return AgentSpec(
        agent_id, fp, dyn,
        StartGoalTask(TimedState(0.0, sx, sy, 0.0), TimedState(0.0, gx, gy, 0.0)),
        planner or {"planner": "astar"},
    )


@pytest.fixture(scope="session")
def empty_10x15():
    return empty_grid()


@pytest.fixture(scope="session")
def corridor():
    return corridor_grid()


def assert_close(a, b, tol=1e-9):
    assert math.isclose(a, b, rel_tol=0, abs_tol=tol), f"{a} != {b} (tol {tol})"
