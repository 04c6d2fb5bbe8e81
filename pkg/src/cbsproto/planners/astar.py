"""Space-time lattice A* over motion primitives, with path-suffix experience.

Search nodes are (pose, time) pairs; duplicates are detected by rounding the
pose to (0.05 m, 0.05 m, 10 deg) and time to 0.1 s. Cost is arrival time in
seconds. When a previous solution is cached, nodes lying on it inject the
still-valid remainder of that path as extra successors, which shortcuts
replanning without changing what counts as a valid path.
"""
from __future__ import annotations

import heapq
import math
import time as _time

from .. import world
from ..planner_api import FAILURE, SUCCESS, PlanResult
from ..world import SpaceTimeVolume, TimedPath, TimedState
from . import common
from .primitives import apply_primitive, build_primitives

_POS_Q = 0.05
_TH_Q = math.radians(10)
_T_Q = 0.1


def _key(x, y, theta, t):
    return (
        round(x / _POS_Q),
        round(y / _POS_Q),
        round(theta / _TH_Q) % 36,
        round(t / _T_Q),
    )


def _pose_key(x, y, theta):
    return (round(x / _POS_Q), round(y / _POS_Q), round(theta / _TH_Q) % 36)


class _Node:
    __slots__ = ("t", "x", "y", "theta", "parent", "samples")

    def __init__(self, t, x, y, theta, parent, samples):
        self.t = t
        self.x = x
        self.y = y
        self.theta = theta
        self.parent = parent
        self.samples = samples  # dense (t,x,y,theta) from parent to here


class AStarPlanner:
    """plan() implementation for four_connected, dubins and ackermann agents."""

    def __init__(self, agent, grid, params=None, seed=0):
        params = params or {}
        self.agent = agent
        self.grid = grid
        self.cell = float(params.get("cell", 0.5))
        self.experience = bool(params.get("experience", True))
        self.max_expansions = int(params.get("max_expansions", 200_000))
        self.primitives = build_primitives(agent.dynamics, self.cell)
        self._fields = {}
        self._cache = None  # node chain of the last solution
        self._last_chain = None
        self.last_stats = {}

    # -- public API ---------------------------------------------------------

    def plan(self, constraints, deadline) -> PlanResult:
        task = self.agent.task
        if task.kind != "start_goal":
            raise ValueError("AStarPlanner handles start_goal tasks; wrap coverage")
        start = self.agent.start
        res = self.search(
            start, 0.0, (task.goal.x, task.goal.y), task.goal_tolerance,
            constraints, deadline,
        )
        if res.status == SUCCESS and self.experience:
            self._cache = self._last_chain
        return res

    # -- segment search (also used by the coverage wrapper) -----------------

    def search(self, start: TimedState, t0, goal_xy, tol, constraints, deadline):
        t_limit = _time.monotonic() + deadline
        fp = self.agent.footprint
        dyn = self.agent.dynamics
        cons = [c for c in constraints if c.agent_id == self.agent.agent_id]
        field = self._field(goal_xy)
        h0 = common.heuristic_seconds(field, start.x, start.y, dyn)
        if math.isinf(h0) or world.static_collides(self.grid, fp, start):
            self.last_stats = {"expansions": 0, "generated": 0}
            return PlanResult.failure()

        exp_edges = self._experience_edges(start, t0, cons) if self.experience else None

        root = _Node(t0, start.x, start.y, start.theta, None, ())
        open_heap = []
        counter = 0
        heapq.heappush(open_heap, (t0 + h0, -t0, counter, root))
        best_g = {_key(root.x, root.y, root.theta, root.t): t0}
        expansions = 0
        generated = 1
        matched_cache = set()

        while open_heap:
            f, neg_g, _, node = heapq.heappop(open_heap)
            g = -neg_g
            k = _key(node.x, node.y, node.theta, node.t)
            if g > best_g.get(k, math.inf) + 1e-12:
                continue
            expansions += 1
            if expansions % 128 == 0 and _time.monotonic() > t_limit:
                self.last_stats = {"expansions": expansions, "generated": generated}
                return PlanResult.timeout()
            if expansions > self.max_expansions:
                break

            if self._is_goal(node, goal_xy, tol, cons):
                path = self._emit(node, t0)
                self._last_chain = self._chain_of(node)
                self.last_stats = {"expansions": expansions, "generated": generated}
                return PlanResult(SUCCESS, SpaceTimeVolume(path, fp), path.cost)

            succs = []
            for prim in self.primitives:
                samples = apply_primitive(prim, node.x, node.y, node.theta, node.t)
                if self._edge_ok(samples, fp, cons, dyn.speed):
                    st, sx, sy, sth = samples[-1]
                    succs.append(_Node(st, sx, sy, sth, node, tuple(samples)))

            if exp_edges is not None:
                pk = _pose_key(node.x, node.y, node.theta)
                if pk in exp_edges and pk not in matched_cache:
                    matched_cache.add(pk)
                    succs.extend(self._cache_successors(node, pk, exp_edges, cons, fp, dyn.speed))

            for s in succs:
                sk = _key(s.x, s.y, s.theta, s.t)
                if s.t < best_g.get(sk, math.inf) - 1e-12:
                    best_g[sk] = s.t
                    h = common.heuristic_seconds(field, s.x, s.y, dyn)
                    if math.isinf(h):
                        continue
                    counter += 1
                    generated += 1
                    heapq.heappush(open_heap, (s.t + h, -s.t, counter, s))

        self.last_stats = {"expansions": expansions, "generated": generated}
        return PlanResult.failure()

    # -- internals ----------------------------------------------------------

    def _field(self, goal_xy):
        diag = self.agent.dynamics.model != "four_connected"
        key = (round(goal_xy[0], 6), round(goal_xy[1], 6), diag)
        if key not in self._fields:
            self._fields[key] = common.DistanceField(self.grid, goal_xy, diag)
        return self._fields[key]

    def _is_goal(self, node, goal_xy, tol, cons):
        if math.hypot(node.x - goal_xy[0], node.y - goal_xy[1]) > tol + 1e-9:
            return False
        pose = TimedState(node.t, node.x, node.y, node.theta)
        return common.rest_safe(cons, self.agent.footprint, pose, node.t)

    def _edge_ok(self, samples, fp, cons, speed):
        for t, x, y, th in samples:
            pose = TimedState(t, x, y, th)
            if world.static_collides(self.grid, fp, pose):
                return False
            for c in cons:
                if common.constraint_blocks_sample(c, fp, pose, speed):
                    return False
        return True

    @staticmethod
    def _chain_of(node):
        chain = []
        n = node
        while n is not None:
            chain.append(n)
            n = n.parent
        chain.reverse()
        return chain

    def _emit(self, node, t0) -> TimedPath:
        chain = self._chain_of(node)
        states = [TimedState(chain[0].t - t0, chain[0].x, chain[0].y, chain[0].theta)]
        for n in chain[1:]:
            for t, x, y, th in n.samples:
                if t - t0 > states[-1].t + 1e-9:
                    states.append(TimedState(t - t0, x, y, th))
        return TimedPath(states, states[-1].t)

    # -- experience ---------------------------------------------------------

    def _experience_edges(self, start, t0, cons):
        """Index the cached solution chain by pose key, if it is usable."""
        if not self._cache:
            return None
        n0 = self._cache[0]
        if math.hypot(n0.x - start.x, n0.y - start.y) > 1e-6:
            return None
        index = {}
        for i, n in enumerate(self._cache):
            index.setdefault(_pose_key(n.x, n.y, n.theta), i)
        return index

    def _cache_successors(self, node, pk, index, cons, fp, speed):
        """Replay the cached chain's remainder from a matching node, shifted to
        this node's time, cut at the first edge invalid under `cons`."""
        i = index[pk]
        cached = self._cache
        shift = node.t - cached[i].t
        out = []
        parent = node
        for cn in cached[i + 1:]:
            shifted = tuple((t + shift, x, y, th) for t, x, y, th in cn.samples)
            ok = True
            for t, x, y, th in shifted:
                pose = TimedState(t, x, y, th)
                if world.static_collides(self.grid, fp, pose) or any(
                    common.constraint_blocks_sample(c, fp, pose, speed) for c in cons
                ):
                    ok = False
                    break
            if not ok:
                break
            succ = _Node(cn.t + shift, cn.x, cn.y, cn.theta, parent, shifted)
            out.append(succ)
            parent = succ
        return out
