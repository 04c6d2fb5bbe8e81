"""Built-in planners and the factory that wires them to agents."""
from __future__ import annotations

import zlib

from .astar import AStarPlanner
from .colloc import CollocPlanner
from .coverage import CoveragePlanner
from .rrt import RRTPlanner

__all__ = [
    "AStarPlanner",
    "CollocPlanner",
    "CoveragePlanner",
    "RRTPlanner",
    "make_planner",
    "agent_seed",
]


def agent_seed(scenario_seed: int, agent_id: str) -> int:
    """Stable per-agent RNG seed derived from the scenario seed."""
    return zlib.crc32(f"{scenario_seed}:{agent_id}".encode()) & 0x7FFFFFFF


def make_planner(agent, grid, scenario_seed=0):
    """Build the planner an agent's config asks for.

    Config shape: {"planner": "astar"|"rrt"|"colloc"|"external",
                   "params": {...}, "seed": int}. Coverage tasks are handled
    by wrapping the configured segment planner.
    """
    cfg = agent.planner or {}
    name = cfg.get("planner", "astar")
    params = dict(cfg.get("params", {}))
    seed = cfg.get("seed", agent_seed(scenario_seed, agent.agent_id))

    if name == "astar":
        inner = AStarPlanner(agent, grid, params, seed)
    elif name == "rrt":
        inner = RRTPlanner(agent, grid, params, seed)
    elif name == "colloc":
        if agent.task.kind == "coverage":
            raise ValueError("colloc does not support coverage tasks")
        return CollocPlanner(agent, grid, params, seed)
    elif name == "external":
        from ..wire import ExternalPlannerHandle

        return ExternalPlannerHandle(agent, grid, params)
    else:
        raise ValueError(f"unknown planner {name!r}")

    if agent.task.kind == "coverage":
        return CoveragePlanner(inner, agent)
    return inner
