"""Constraint-tree coordination over black-box single-agent planners.

High-level best-first search over constraint-tree (CT) nodes. Each node holds
a per-agent constraint set and the plans satisfying it; a node with zero
inter-agent conflicts is a solution. Expanding a node resolves its earliest
conflict by branching into two children, each adding one space-time square
constraint to one of the two colliding agents and replanning only that agent.
The default priority is greedy (fewest conflicting pairs first); an optimal
style sum-of-costs-first ordering is available for verification runs.
"""
from __future__ import annotations

import heapq
import itertools
import math
import time as _time
from dataclasses import dataclass, field

from . import world
from .planner_api import SUCCESS, Constraint, validate_result
from .planners import make_planner
from .world import sample_state

STATUS_SUCCESS = "success"
STATUS_TIMEOUT = "timeout"
STATUS_NODE_BUDGET = "node_budget_exhausted"
STATUS_QUEUE_EMPTY = "queue_empty"
STATUS_ROOT_INFEASIBLE = "root_infeasible"


@dataclass(frozen=True)
class SolveLimits:
    wall_clock: float = 120.0
    max_ct_nodes: int = 10_000
    collision_dt: float = 0.1
    constraint_side: float = 0.1
    constraint_duration: float = 2.5

    def __post_init__(self):
        for name in ("wall_clock", "collision_dt", "constraint_side", "constraint_duration"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.max_ct_nodes <= 0:
            raise ValueError("max_ct_nodes must be positive")


@dataclass(frozen=True)
class Conflict:
    agent_a: str
    agent_b: str
    t0: float
    p0: tuple  # (x, y) representative point in the overlap region


@dataclass
class CTNode:
    node_id: int
    constraints: dict  # agent_id -> tuple of Constraint
    results: dict  # agent_id -> PlanResult (all Success)
    conflicts: list = field(default_factory=list)
    conflicting_pairs: int = 0
    sum_cost: float = 0.0
    parent_id: int | None = None

    def volumes(self):
        return {aid: r.volume for aid, r in self.results.items()}


def representative_point(fp_a, pose_a, fp_b, pose_b):
    """Centroid of a 20x20 overlap-membership sample over the intersection of
    the two placed bounding boxes; midpoint of centers on grazing contact."""
    box_a = _bbox(fp_a, pose_a)
    box_b = _bbox(fp_b, pose_b)
    lo_x = max(box_a[0], box_b[0])
    lo_y = max(box_a[1], box_b[1])
    hi_x = min(box_a[2], box_b[2])
    hi_y = min(box_a[3], box_b[3])
    mid = ((pose_a.x + pose_b.x) / 2, (pose_a.y + pose_b.y) / 2)
    if hi_x < lo_x or hi_y < lo_y:
        return mid
    poly_a = world.footprint_polygon(fp_a, pose_a)
    poly_b = world.footprint_polygon(fp_b, pose_b)
    n = 20
    sx = sy = 0.0
    count = 0
    for i in range(n):
        px = lo_x + (i + 0.5) * (hi_x - lo_x) / n
        for j in range(n):
            py = lo_y + (j + 0.5) * (hi_y - lo_y) / n
            if _contains(poly_a, px, py) and _contains(poly_b, px, py):
                sx += px
                sy += py
                count += 1
    if count == 0:
        return mid
    return (sx / count, sy / count)


def _bbox(fp, pose):
    if fp.shape == "circle":
        r = fp.dims[0]
        return (pose.x - r, pose.y - r, pose.x + r, pose.y + r)
    poly = world.footprint_polygon(fp, pose)
    xs = [p[0] for p in poly]
    ys = [p[1] for p in poly]
    return (min(xs), min(ys), max(xs), max(ys))


def _contains(poly, x, y):
    if poly[0] == "circle":
        _, cx, cy, r = poly
        return (x - cx) ** 2 + (y - cy) ** 2 <= r * r
    return world.point_in_polygon(x, y, poly)


def detect_conflicts(volumes: dict, dt: float):
    """First colliding sample per unordered agent pair, agents resting at
    their final poses; sorted by time then pair ids."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    ids = sorted(volumes)
    if len(ids) < 2:
        return []
    horizon = max(volumes[a].path.makespan for a in ids)
    steps = int(math.floor(horizon / dt + 1e-9))
    conflicts = []
    pending = list(itertools.combinations(ids, 2))
    for k in range(steps + 1):
        if not pending:
            break
        t = k * dt
        poses = {a: sample_state(volumes[a].path, t) for a in ids}
        still = []
        for a, b in pending:
            va, vb = volumes[a], volumes[b]
            if world.overlaps(va.footprint, poses[a], vb.footprint, poses[b]):
                p0 = representative_point(va.footprint, poses[a], vb.footprint, poses[b])
                conflicts.append(Conflict(a, b, t, p0))
            else:
                still.append((a, b))
        pending = still
    conflicts.sort(key=lambda c: (c.t0, c.agent_a, c.agent_b))
    return conflicts


def get_constraints(conflict: Conflict, limits: SolveLimits, grid=None):
    """Two constraints sharing one square and interval, one per agent.

    The square is the cell of the lattice anchored at the map origin that
    contains p0; points on a lattice line go to the larger-index cell."""
    s = limits.constraint_side
    ix = math.floor(conflict.p0[0] / s + 1e-9)
    iy = math.floor(conflict.p0[1] / s + 1e-9)
    cx = (ix + 0.5) * s
    cy = (iy + 0.5) * s
    t0, t1 = conflict.t0, conflict.t0 + limits.constraint_duration
    out = []
    for aid in (conflict.agent_a, conflict.agent_b):
        if grid is not None:
            c = Constraint.clipped(aid, cx, cy, s, t0, t1, grid)
        else:
            c = Constraint(aid, cx, cy, s, t0, t1)
        out.append(c)
    return out[0], out[1]


class CBSSolver:
    """Owns one coordination problem: agents, map, per-agent planners."""

    def __init__(self, agents, grid, limits=None, mode="greedy", seed=0,
                 planners=None, keep_trace=False, validate_nodes=False):
        ids = [a.agent_id for a in agents]
        if not ids:
            raise ValueError("no agents")
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate agent ids")
        if mode not in ("greedy", "optimal"):
            raise ValueError(f"unknown mode {mode!r}")
        self.agents = {a.agent_id: a for a in agents}
        self.order = ids
        self.grid = grid
        self.limits = limits or SolveLimits()
        self.mode = mode
        self.planners = planners or {
            a.agent_id: make_planner(a, grid, seed) for a in agents
        }
        self.keep_trace = keep_trace
        self.validate_nodes = validate_nodes
        self.trace = []  # (parent CTNode, child CTNode, agent_id, Constraint)
        self.pop_trace = []  # (popped priority, best remaining priority or None)
        self._next_id = 0
        self._deadline = None
        self.stats = {
            "ct_generated": 0,
            "ct_expanded": 0,
            "root_conflicts": 0,
            "wall_s": 0.0,
            "per_planner": {},
        }

    def close(self):
        """Release planner resources (shuts down external subprocesses)."""
        for p in self.planners.values():
            shutdown = getattr(p, "shutdown", None)
            if shutdown is not None:
                shutdown()

    # -- plumbing -----------------------------------------------------------

    def _planner_name(self, aid):
        return (self.agents[aid].planner or {}).get("planner", "astar")

    def _plan(self, aid, constraints):
        agent = self.agents[aid]
        remaining = math.inf if self._deadline is None else self._deadline - _time.monotonic()
        budget = max(0.0, min(agent.per_query_timeout, remaining))
        t0 = _time.monotonic()
        result = self.planners[aid].plan(list(constraints), budget)
        elapsed = _time.monotonic() - t0
        name = self._planner_name(aid)
        slot = self.stats["per_planner"].setdefault(name, {"queries": 0, "time_s": 0.0})
        slot["queries"] += 1
        slot["time_s"] += elapsed
        return result

    def _finish(self, node):
        node.conflicts = detect_conflicts(node.volumes(), self.limits.collision_dt)
        node.conflicting_pairs = len(node.conflicts)
        node.sum_cost = sum(r.cost for r in node.results.values())
        self.stats["ct_generated"] += 1
        if self.validate_nodes:
            for aid, res in node.results.items():
                bad = validate_result(
                    self.agents[aid], list(node.constraints[aid]), res, self.grid
                )
                if bad:
                    raise AssertionError(f"node {node.node_id} agent {aid}: {bad}")
        return node

    def _priority(self, node):
        if self.mode == "optimal":
            return (node.sum_cost, node.conflicting_pairs, node.node_id)
        return (node.conflicting_pairs, node.sum_cost, node.node_id)

    # -- search -------------------------------------------------------------

    def generate_root(self):
        results = {}
        for aid in self.order:
            res = self._plan(aid, ())
            if res.status != SUCCESS:
                return None, aid
            results[aid] = res
        node = CTNode(
            self._next_id, {aid: () for aid in self.order}, results, parent_id=None
        )
        self._next_id += 1
        return self._finish(node), None

    def expand(self, node: CTNode):
        """Children resolving the node's earliest conflict, 0 to 2 of them."""
        conflict = node.conflicts[0]
        self.stats["ct_expanded"] += 1
        children = []
        for c in get_constraints(conflict, self.limits, self.grid):
            aid = c.agent_id
            if c in node.constraints[aid]:
                continue  # a repeat constraint cannot make progress
            new_cons = node.constraints[aid] + (c,)
            res = self._plan(aid, new_cons)
            if res.status != SUCCESS:
                continue
            constraints = dict(node.constraints)
            constraints[aid] = new_cons
            results = dict(node.results)
            results[aid] = res
            child = CTNode(self._next_id, constraints, results, parent_id=node.node_id)
            self._next_id += 1
            children.append(self._finish(child))
            if self.keep_trace:
                self.trace.append((node, child, aid, c))
        return children

    def solve(self):
        start = _time.monotonic()
        self._deadline = start + self.limits.wall_clock
        try:
            root, failed_agent = self.generate_root()
            if root is None:
                self.stats["wall_s"] = _time.monotonic() - start
                return Solution(
                    STATUS_ROOT_INFEASIBLE, {}, [], dict(self.stats),
                    failed_agent=failed_agent,
                )
            self.stats["root_conflicts"] = root.conflicting_pairs
            heap = [(self._priority(root), root)]
            while heap:
                if _time.monotonic() > self._deadline:
                    return self._fail(STATUS_TIMEOUT, start)
                prio, node = heapq.heappop(heap)
                if self.keep_trace:
                    self.pop_trace.append((prio, heap[0][0] if heap else None))
                if not node.conflicts:
                    self.stats["wall_s"] = _time.monotonic() - start
                    return Solution(
                        STATUS_SUCCESS, dict(node.results),
                        [c for aid in self.order for c in node.constraints[aid]],
                        dict(self.stats),
                    )
                if self.stats["ct_generated"] >= self.limits.max_ct_nodes:
                    return self._fail(STATUS_NODE_BUDGET, start)
                for child in self.expand(node):
                    heapq.heappush(heap, (self._priority(child), child))
            return self._fail(STATUS_QUEUE_EMPTY, start)
        finally:
            self.stats["wall_s"] = _time.monotonic() - start

    def _fail(self, status, start):
        self.stats["wall_s"] = _time.monotonic() - start
        return Solution(status, {}, [], dict(self.stats))


@dataclass
class Solution:
    status: str
    results: dict  # agent_id -> PlanResult, empty on failure
    constraints_used: list
    stats: dict
    failed_agent: str | None = None

    @property
    def ok(self):
        return self.status == STATUS_SUCCESS

    def sum_cost(self):
        return sum(r.cost for r in self.results.values())

    def to_json_dict(self, agents):
        agents_json = []
        for spec in agents:
            res = self.results.get(spec.agent_id)
            if res is None:
                continue
            path = res.volume.path
            agents_json.append(
                {
                    "id": spec.agent_id,
                    "cost": res.cost,
                    "path": [[s.t, s.x, s.y, s.theta] for s in path.states],
                    "footprint": spec.footprint.to_json_dict(),
                }
            )
        return {
            "status": self.status,
            "agents": agents_json,
            "constraints_used": [c.to_json_dict() for c in self.constraints_used],
            "stats": self.stats,
        }


def solve(agents, grid, limits=None, mode="greedy", seed=0, **kw):
    return CBSSolver(agents, grid, limits, mode, seed, **kw).solve()
