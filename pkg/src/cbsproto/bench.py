"""Scenario generation, baselines, oracles and the benchmark harness.

Includes a deterministic random scenario generator, a local priority-based
collision-avoidance baseline (reverse under 0.1 m clearance, freeze under
0.05 m), a brute-force joint-space A* oracle for small grid instances, and a
suite runner that buckets results by root-conflict count.
"""
from __future__ import annotations

import csv
import heapq
import io
import itertools
import json
import math
import random
from dataclasses import dataclass, field

from . import world
from .planner_api import (
    SUCCESS,
    AgentSpec,
    Dynamics,
    StartGoalTask,
    validate_result,
)
from .planners import make_planner
from .protocol import STATUS_SUCCESS, CBSSolver, SolveLimits, detect_conflicts
from .world import Footprint, OccupancyGrid, TimedState, load_map_file, sample_state

MAX_REJECTIONS = 10_000
BASELINE_REVERSE_CLEARANCE = 0.1
BASELINE_FREEZE_CLEARANCE = 0.05
BASELINE_SIM_DT = 0.05
ORACLE_STATE_CAP = 10_000_000
BUCKETS = ("0", "1", "2", "3", "4+")

CSV_COLUMNS = (
    "scenario_id",
    "method",
    "status",
    "root_conflict_pairs",
    "ct_generated",
    "ct_expanded",
    "wall_s",
    "sum_cost",
    "failure_reason",
)


class SamplingExhausted(RuntimeError):
    pass


class RootInfeasible(RuntimeError):
    pass


@dataclass
class Scenario:
    scenario_id: str
    grid: OccupancyGrid
    agents: list
    seed: int
    map_path: str = ""
    metadata: dict = field(default_factory=dict)

    def to_json_dict(self):
        return {
            "scenario_id": self.scenario_id,
            "map": self.map_path,
            "seed": self.seed,
            "agents": [a.to_json_dict() for a in self.agents],
            "metadata": self.metadata,
        }


def save_scenario(scn: Scenario, path):
    with open(path, "w") as f:
        json.dump(scn.to_json_dict(), f, indent=1, sort_keys=True)
        f.write("\n")


def load_scenario(path, grid=None) -> Scenario:
    import os

    with open(path) as f:
        d = json.load(f)
    if grid is None:
        map_path = d["map"]
        if not os.path.isabs(map_path):
            map_path = os.path.join(os.path.dirname(os.path.abspath(path)), map_path)
        grid = load_map_file(map_path)
    return Scenario(
        d["scenario_id"], grid, [AgentSpec.from_json_dict(a) for a in d["agents"]],
        d["seed"], d.get("map", ""), d.get("metadata", {}),
    )


# -- map and scenario generation -------------------------------------------


def generate_random_map(width_m, height_m, resolution_m, fraction, seed, name="random"):
    """Occupancy grid with an exact count of randomly occupied cells."""
    cols = round(width_m / resolution_m)
    rows = round(height_m / resolution_m)
    n = cols * rows
    count = round(fraction * n)
    rng = random.Random(seed)
    occupied = set(rng.sample(range(n), count))
    cells = tuple(1 if i in occupied else 0 for i in range(n))
    return OccupancyGrid(width_m, height_m, resolution_m, cells, name)


# (planner, dynamics, footprint) pool used by the generator; each agent gets
# the first entry, in shuffled order, whose unconstrained probe succeeds
def default_pool():
    return [
        {
            "planner": {"planner": "astar"},
            "dynamics": Dynamics("four_connected", 1.0),
            "footprint": Footprint.rectangle(0.8, 0.3),
        },
        {
            "planner": {"planner": "rrt"},
            "dynamics": Dynamics("none", 1.0),
            "footprint": Footprint.triangle(0.6, 0.4),
        },
    ]


def heavy_pool():
    return default_pool() + [
        {
            "planner": {"planner": "astar"},
            "dynamics": Dynamics("dubins", 1.0, min_turn_radius=0.5),
            "footprint": Footprint.rectangle(0.4, 0.1),
        },
        {
            "planner": {"planner": "colloc"},
            "dynamics": Dynamics("ackermann", 1.0, max_steer=0.6, wheelbase=0.3),
            "footprint": Footprint.rectangle(0.4, 0.1),
        },
    ]


def generate_scenarios(
    grid, n_agents, count, seed, pool=None, probe_timeout=5.0, map_path=""
):
    """Deterministic rejection-sampled scenarios on one map."""
    if not 2 <= n_agents <= 10:
        raise ValueError("n_agents must be in 2..10")
    pool = pool if pool is not None else default_pool()
    out = []
    for i in range(count):
        rng = random.Random(f"{seed}:{i}")
        scn = _generate_one(grid, n_agents, rng, pool, probe_timeout)
        scn.scenario_id = f"s{seed}-{i}"
        scn.seed = seed
        scn.map_path = map_path
        scn.metadata = {"n_agents": n_agents, "index": i}
        out.append(scn)
    return out


def _generate_one(grid, n_agents, rng, pool, probe_timeout):
    agents = []
    rejections = 0
    while len(agents) < n_agents:
        if rejections > MAX_REJECTIONS:
            raise SamplingExhausted(f"gave up after {MAX_REJECTIONS} rejections")
        entry = rng.choice(pool)
        fp = entry["footprint"]
        start = _sample_free_pose(grid, fp, rng)
        goal = _sample_free_pose(grid, fp, rng)
        if start is None or goal is None:
            rejections += 1
            continue
        if entry["dynamics"].model == "four_connected":
            # axis-aligned motion stays on the start's lattice; snap the goal
            # onto it so the probe can actually terminate there
            cell = entry["planner"].get("params", {}).get("cell", 0.5)
            goal = TimedState(
                0.0,
                start.x + round((goal.x - start.x) / cell) * cell,
                start.y + round((goal.y - start.y) / cell) * cell,
                goal.theta,
            )
            if world.static_collides(grid, fp, goal):
                rejections += 1
                continue
        sep_ok = all(
            math.hypot(start.x - a.start.x, start.y - a.start.y)
            >= fp.circumradius + a.footprint.circumradius + 0.1
            for a in agents
        )
        if not sep_ok or math.hypot(start.x - goal.x, start.y - goal.y) < 1.0:
            rejections += 1
            continue
        aid = f"a{len(agents)}"
        spec = AgentSpec(
            aid, fp, entry["dynamics"],
            StartGoalTask(start, goal),
            dict(entry["planner"]),
        )
        probe = make_planner(spec, grid, rng.randrange(2**30))
        if probe.plan([], probe_timeout).status != SUCCESS:
            rejections += 1
            continue
        agents.append(spec)
    return Scenario("", grid, agents, 0)


def _sample_free_pose(grid, fp, rng, tries=50):
    for _ in range(tries):
        x = rng.uniform(0.0, grid.width_m)
        y = rng.uniform(0.0, grid.height_m)
        pose = TimedState(0.0, x, y, 0.0)
        if not world.static_collides(grid, fp, pose):
            return pose
    return None


# -- root conflicts ---------------------------------------------------------


def independent_plans(scenario: Scenario, limits=None):
    limits = limits or SolveLimits()
    results = {}
    for a in scenario.agents:
        planner = make_planner(a, scenario.grid, scenario.seed)
        res = planner.plan([], a.per_query_timeout)
        if res.status != SUCCESS:
            raise RootInfeasible(a.agent_id)
        results[a.agent_id] = res
    return results


def count_root_conflicts(scenario: Scenario, limits=None):
    limits = limits or SolveLimits()
    results = independent_plans(scenario, limits)
    conflicts = detect_conflicts(
        {aid: r.volume for aid, r in results.items()}, limits.collision_dt
    )
    return len(conflicts), len(conflicts)


# -- priority-freeze baseline ----------------------------------------------


@dataclass
class RunRecord:
    scenario_id: str
    method: str
    status: str
    root_conflict_pairs: int
    ct_generated: int
    ct_expanded: int
    wall_s: float
    sum_cost: float
    failure_reason: str = ""
    per_agent_costs: dict = field(default_factory=dict)
    solution: object = None

    def csv_row(self):
        return [
            self.scenario_id, self.method, self.status,
            self.root_conflict_pairs, self.ct_generated, self.ct_expanded,
            f"{self.wall_s:.3f}", f"{self.sum_cost:.6f}", self.failure_reason,
        ]


def run_baseline(scenario: Scenario, sim_dt=BASELINE_SIM_DT, limits=None) -> RunRecord:
    """Execute independent plans with local reverse/freeze avoidance.

    Priority = scenario order. A lower-priority agent reverses along its own
    path while boundary clearance to any higher-priority agent is below
    0.1 m; below 0.05 m both agents freeze permanently."""
    import time as _time

    t_start = _time.monotonic()
    limits = limits or SolveLimits()
    try:
        results = independent_plans(scenario, limits)
    except RootInfeasible as e:
        return RunRecord(
            scenario.scenario_id, "baseline", "failure", -1, 0, 0,
            _time.monotonic() - t_start, 0.0, f"root_infeasible:{e}",
        )
    ids = [a.agent_id for a in scenario.agents]
    paths = {aid: results[aid].volume.path for aid in ids}
    fps = {a.agent_id: a.footprint for a in scenario.agents}
    root_pairs = len(detect_conflicts(
        {aid: results[aid].volume for aid in ids}, limits.collision_dt
    ))
    horizon = 3.0 * max(p.makespan for p in paths.values())

    progress = {aid: 0.0 for aid in ids}
    frozen = set()
    reason = ""
    t = 0.0
    while t <= horizon + 1e-9:
        poses = {aid: sample_state(paths[aid], progress[aid]) for aid in ids}
        # priority order: earlier agents have already fixed this step's intent
        for rank, aid in enumerate(ids):
            if aid in frozen:
                continue
            min_clear = math.inf
            nearest = None
            for other in ids[:rank]:
                c = world.placed_clearance(fps[aid], poses[aid], fps[other], poses[other])
                if c < min_clear:
                    min_clear, nearest = c, other
            if min_clear < BASELINE_FREEZE_CLEARANCE:
                frozen.add(aid)
                frozen.add(nearest)
                continue
            if min_clear < BASELINE_REVERSE_CLEARANCE:
                progress[aid] = max(0.0, progress[aid] - sim_dt)
            else:
                progress[aid] = min(paths[aid].makespan, progress[aid] + sim_dt)
            poses[aid] = sample_state(paths[aid], progress[aid])
        for a, b in itertools.combinations(ids, 2):
            if world.overlaps(fps[a], poses[a], fps[b], poses[b]):
                reason = "overlap"
                break
        if reason:
            break
        done = all(progress[aid] >= paths[aid].makespan - 1e-9 for aid in ids)
        if done:
            wall = _time.monotonic() - t_start
            return RunRecord(
                scenario.scenario_id, "baseline", "success", root_pairs, 0, 0,
                wall, sum(p.makespan for p in paths.values()),
                per_agent_costs={aid: paths[aid].makespan for aid in ids},
            )
        if frozen and any(
            aid in frozen and progress[aid] < paths[aid].makespan - 1e-9 for aid in ids
        ):
            reason = "freeze_deadlock"
            break
        t += sim_dt
    wall = _time.monotonic() - t_start
    return RunRecord(
        scenario.scenario_id, "baseline", "failure", root_pairs, 0, 0, wall, 0.0,
        failure_reason=reason or "horizon",
    )


# -- classical-MAPF helpers and the joint oracle ----------------------------


def classical_limits(wall_clock=10.0):
    """Coordinator settings that recover grid MAPF semantics exactly.

    Sampling at half-timestep granularity is what makes swap conflicts
    observable; the short constraint window blocks a cell at one timestep
    without bleeding into the next one."""
    return SolveLimits(
        wall_clock=wall_clock, max_ct_nodes=10_000, collision_dt=0.5,
        constraint_side=1.0, constraint_duration=0.25,
    )


def classical_agents(starts, goals):
    """Unit-grid agents: cell-center poses, near-point footprints, 1 cell/s."""
    agents = []
    for i, ((sx, sy), (gx, gy)) in enumerate(zip(starts, goals)):
        agents.append(
            AgentSpec(
                f"a{i}",
                Footprint.circle(0.05),
                Dynamics("four_connected", 1.0),
                StartGoalTask(
                    TimedState(0.0, sx + 0.5, sy + 0.5, 0.0),
                    TimedState(0.0, gx + 0.5, gy + 0.5, 0.0),
                    goal_tolerance=0.15,
                ),
                {"planner": "astar", "params": {"cell": 1.0}},
            )
        )
    return agents


def classical_scenario(grid, starts, goals, scenario_id="classical", seed=0):
    return Scenario(scenario_id, grid, classical_agents(starts, goals), seed)


def generate_classical_instances(count, seed, size=6, n_obstacles=4):
    """Random small-grid instances with solvable single-agent paths."""
    out = []
    i = 0
    attempt = 0
    while len(out) < count:
        rng = random.Random(f"{seed}:classical:{attempt}")
        attempt += 1
        blocked = set()
        while len(blocked) < n_obstacles:
            blocked.add((rng.randrange(size), rng.randrange(size)))
        cells = tuple(
            1 if (x, y) in blocked else 0
            for y in range(size) for x in range(size)
        )
        grid = OccupancyGrid(float(size), float(size), 1.0, cells, f"classical-{attempt}")
        n_agents = rng.choice((2, 3))
        free = [(x, y) for x in range(size) for y in range(size) if (x, y) not in blocked]
        if len(free) < 2 * n_agents:
            continue
        starts = rng.sample(free, n_agents)
        goals = rng.sample(free, n_agents)
        if len(set(goals)) != n_agents or len(set(starts)) != n_agents:
            continue
        if any(_bfs_dist(blocked, size, s, g) is None for s, g in zip(starts, goals)):
            continue
        scn = classical_scenario(grid, starts, goals, f"classical-{seed}-{i}", seed)
        scn.metadata = {"starts": starts, "goals": goals, "size": size}
        out.append(scn)
        i += 1
    return out


def _bfs_dist(blocked, size, start, goal):
    from collections import deque

    q = deque([(start, 0)])
    seen = {start}
    while q:
        (x, y), d = q.popleft()
        if (x, y) == goal:
            return d
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            nx, ny = x + dx, y + dy
            if 0 <= nx < size and 0 <= ny < size and (nx, ny) not in seen \
                    and (nx, ny) not in blocked:
                seen.add((nx, ny))
                q.append(((nx, ny), d + 1))
    return None


def joint_oracle(scenario: Scenario):
    """Optimal classical sum-of-costs by A* over the joint state space.

    Vertex and swap collisions are forbidden. Returns the optimal value,
    math.inf when provably infeasible, or None when the state cap is hit."""
    grid = scenario.grid
    size_x, size_y = grid.cols, grid.rows
    blocked = {
        (x, y)
        for y in range(size_y) for x in range(size_x)
        if grid.cells[y * size_x + x]
    }
    starts = []
    goals = []
    for a in scenario.agents:
        s = a.start
        g = a.task.goal
        starts.append((int(s.x), int(s.y)))
        goals.append((int(g.x), int(g.y)))
    n = len(starts)

    dist_maps = []
    for g in goals:
        dmap = {}
        from collections import deque

        q = deque([(g, 0)])
        dmap[g] = 0
        while q:
            (x, y), d = q.popleft()
            for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                nx, ny = x + dx, y + dy
                if 0 <= nx < size_x and 0 <= ny < size_y \
                        and (nx, ny) not in blocked and (nx, ny) not in dmap:
                    dmap[(nx, ny)] = d + 1
                    q.append(((nx, ny), d + 1))
        dist_maps.append(dmap)
    if any(starts[i] not in dist_maps[i] for i in range(n)):
        return math.inf

    def h(positions, finished):
        total = 0
        for i in range(n):
            if not finished[i]:
                d = dist_maps[i].get(positions[i])
                if d is None:
                    return math.inf
                total += d
        return total

    start_state = (tuple(starts), tuple(False for _ in range(n)))
    best = {start_state: 0}
    pq = [(h(*start_state), 0, start_state)]
    visited = 0
    moves = ((0, 0), (1, 0), (-1, 0), (0, 1), (0, -1))
    while pq:
        f, g_cost, state = heapq.heappop(pq)
        if g_cost > best.get(state, math.inf):
            continue
        visited += 1
        if visited > ORACLE_STATE_CAP:
            return None
        positions, finished = state
        if all(finished):
            return float(g_cost)
        movers = [i for i in range(n) if not finished[i]]
        choices = []
        for i in movers:
            x, y = positions[i]
            opts = []
            if positions[i] == goals[i]:
                opts.append(("finish", positions[i]))
            for dx, dy in moves:
                nx, ny = x + dx, y + dy
                if 0 <= nx < size_x and 0 <= ny < size_y and (nx, ny) not in blocked:
                    opts.append(("move", (nx, ny)))
            choices.append(opts)
        for combo in itertools.product(*choices):
            new_pos = list(positions)
            new_fin = list(finished)
            cost_inc = 0
            for i, (kind, cell) in zip(movers, combo):
                if kind == "finish":
                    new_fin[i] = True
                else:
                    new_pos[i] = cell
                    cost_inc += 1
            occupied = {}
            bad = False
            for i in range(n):
                if new_pos[i] in occupied:
                    bad = True
                    break
                occupied[new_pos[i]] = i
            if bad:
                continue
            for i, (kind, cell) in zip(movers, combo):
                if kind == "move":
                    for j in range(n):
                        if j != i and new_pos[j] == positions[i] \
                                and positions[j] == new_pos[i] \
                                and positions[j] != positions[i]:
                            bad = True
                            break
                if bad:
                    break
            if bad:
                continue
            ns = (tuple(new_pos), tuple(new_fin))
            ng = g_cost + cost_inc
            if ng < best.get(ns, math.inf):
                best[ns] = ng
                hh = h(*ns)
                if math.isinf(hh):
                    continue
                heapq.heappush(pq, (ng + hh, ng, ns))
    return math.inf


# -- suite runner -----------------------------------------------------------


def bucket_of(pairs: int) -> str:
    return str(pairs) if pairs < 4 else "4+"


def run_cbs(scenario: Scenario, limits=None, mode="greedy", experience=True,
            method_name="cbs") -> RunRecord:
    limits = limits or SolveLimits()
    agents = scenario.agents
    if not experience:
        agents = [
            AgentSpec(
                a.agent_id, a.footprint, a.dynamics, a.task,
                {**a.planner, "params": {**a.planner.get("params", {}), "experience": False}},
                a.per_query_timeout,
            )
            for a in agents
        ]
    solver = CBSSolver(agents, scenario.grid, limits, mode=mode, seed=scenario.seed)
    sol = solver.solve()
    stats = sol.stats
    record = RunRecord(
        scenario.scenario_id, method_name,
        "success" if sol.ok else "failure",
        stats.get("root_conflicts", -1),
        stats.get("ct_generated", 0), stats.get("ct_expanded", 0),
        stats.get("wall_s", 0.0),
        sol.sum_cost() if sol.ok else 0.0,
        failure_reason="" if sol.ok else sol.status,
        per_agent_costs={aid: r.cost for aid, r in sol.results.items()},
        solution=sol,
    )
    if sol.ok:
        vols = {aid: r.volume for aid, r in sol.results.items()}
        dirty = detect_conflicts(vols, limits.collision_dt)
        by_agent = {a.agent_id: a for a in scenario.agents}
        cons = sol.constraints_used
        for aid, res in sol.results.items():
            dirty = dirty or validate_result(
                by_agent[aid], [c for c in cons if c.agent_id == aid], res, scenario.grid
            )
        if dirty:
            record.status = "failure"
            record.failure_reason = "postcheck_violation"
    return record


def _run_one(args):
    scenario, method, limits, mode, experience = args
    if method == "baseline":
        return run_baseline(scenario, limits=limits)
    return run_cbs(scenario, limits, mode=mode, experience=experience)


def run_suite(scenarios, methods=("cbs",), limits=None, mode="greedy",
              experience=True, jobs=1):
    """Run every scenario under every method; bucket by root conflicts."""
    limits = limits or SolveLimits()
    tasks = [
        (scn, method, limits, mode, experience)
        for scn in scenarios for method in methods
    ]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_run_one, tasks))
    else:
        records = [_run_one(t) for t in tasks]
    records.sort(key=lambda r: (r.scenario_id, r.method))

    summary = {}
    for method in methods:
        buckets = {b: {"runs": 0, "successes": 0, "ct_generated": []} for b in BUCKETS}
        for r in records:
            if r.method != method or r.root_conflict_pairs < 0:
                continue
            b = bucket_of(r.root_conflict_pairs)
            buckets[b]["runs"] += 1
            if r.status == "success":
                buckets[b]["successes"] += 1
                buckets[b]["ct_generated"].append(r.ct_generated)
        for b, slot in buckets.items():
            slot["success_rate"] = (
                slot["successes"] / slot["runs"] if slot["runs"] else None
            )
            cts = sorted(slot.pop("ct_generated"))
            slot["median_ct_generated"] = (
                cts[len(cts) // 2] if cts else None
            )
        summary[method] = buckets
    return records, summary


def records_to_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        w.writerow(r.csv_row())
    return buf.getvalue()


def plot_data(summary) -> dict:
    """Per-bucket success rate and CT-node medians, JSON-ready."""
    return {
        method: {
            b: {
                "runs": slot["runs"],
                "success_rate": slot["success_rate"],
                "median_ct_generated": slot["median_ct_generated"],
            }
            for b, slot in buckets.items()
        }
        for method, buckets in summary.items()
    }
