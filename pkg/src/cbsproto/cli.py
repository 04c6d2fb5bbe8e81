"""Command-line front end: solve, bench, validate, plot, gen.

Exit codes: 0 success, 1 usage or parse error, 2 solver failure,
3 validation violations.
"""
from __future__ import annotations

import json
import logging
import os
import sys

import click

from . import bench as bench_mod
from . import plotting
from .planner_api import SUCCESS, Constraint, PlanResult, validate_result
from .protocol import CBSSolver, SolveLimits, detect_conflicts
from .world import (
    MapFormatError,
    SpaceTimeVolume,
    TimedPath,
    TimedState,
    load_map_file,
    save_map_file,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_SOLVER_FAILURE = 2
EXIT_VIOLATIONS = 3


def _setup_logging():
    level = os.environ.get("CBSP_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING))


def _limits(ctx, **overrides) -> SolveLimits:
    g = ctx.obj
    vals = {
        "wall_clock": g["time_limit"],
        "collision_dt": g["collision_dt"],
        "constraint_side": g["constraint_side"],
        "constraint_duration": g["constraint_duration"],
    }
    vals.update({k: v for k, v in overrides.items() if v is not None})
    return SolveLimits(**vals)


@click.group()
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--time-limit", type=float, default=120.0, show_default=True)
@click.option("--collision-dt", type=float, default=0.1, show_default=True)
@click.option("--constraint-side", type=float, default=0.1, show_default=True)
@click.option("--constraint-duration", type=float, default=2.5, show_default=True)
@click.option("--jobs", type=int, default=1, show_default=True)
@click.pass_context
def cli(ctx, seed, time_limit, collision_dt, constraint_side, constraint_duration, jobs):
    _setup_logging()
    ctx.obj = {
        "seed": seed,
        "time_limit": time_limit,
        "collision_dt": collision_dt,
        "constraint_side": constraint_side,
        "constraint_duration": constraint_duration,
        "jobs": jobs,
    }


@cli.command()
@click.argument("scenario_path", type=click.Path())
@click.option("-o", "--output", "output_path", default="solution.json", show_default=True)
@click.option("--mode", type=click.Choice(["greedy", "optimal"]), default="greedy")
@click.option("--max-ct-nodes", type=int, default=10_000, show_default=True)
@click.pass_context
def solve(ctx, scenario_path, output_path, mode, max_ct_nodes):
    """Solve a scenario file and write a Solution JSON."""
    try:
        scn = bench_mod.load_scenario(scenario_path)
    except (OSError, ValueError, KeyError, MapFormatError) as e:
        click.echo(f"error: cannot load scenario {scenario_path}: {e}", err=True)
        ctx.exit(EXIT_USAGE)
    limits = _limits(ctx, max_ct_nodes=max_ct_nodes)
    solver = CBSSolver(scn.agents, scn.grid, limits, mode=mode, seed=ctx.obj["seed"])
    try:
        sol = solver.solve()
    finally:
        solver.close()
    with open(output_path, "w") as f:
        json.dump(sol.to_json_dict(scn.agents), f, indent=1, sort_keys=True)
        f.write("\n")
    s = sol.stats
    click.echo(
        f"{sol.status}: ct_generated={s['ct_generated']} "
        f"ct_expanded={s['ct_expanded']} root_conflicts={s['root_conflicts']} "
        f"wall_s={s['wall_s']:.2f}"
    )
    ctx.exit(EXIT_OK if sol.ok else EXIT_SOLVER_FAILURE)


@cli.command()
@click.argument("solution_path", type=click.Path())
@click.argument("scenario_path", type=click.Path())
@click.pass_context
def validate(ctx, solution_path, scenario_path):
    """Audit a solution file against its scenario."""
    try:
        with open(solution_path) as f:
            sol = json.load(f)
        scn = bench_mod.load_scenario(scenario_path)
    except (OSError, ValueError, KeyError, MapFormatError) as e:
        click.echo(f"error: {e}", err=True)
        ctx.exit(EXIT_USAGE)
    by_id = {a.agent_id: a for a in scn.agents}
    constraints = [Constraint.from_json_dict(c) for c in sol.get("constraints_used", [])]
    volumes = {}
    problems = []
    try:
        for entry in sol["agents"]:
            aid = entry["id"]
            spec = by_id[aid]
            states = [TimedState(*p) for p in entry["path"]]
            path = TimedPath(states, float(entry["cost"]))
            vol = SpaceTimeVolume(path, spec.footprint)
            volumes[aid] = vol
            result = PlanResult(SUCCESS, vol, path.cost)
            cons = [c for c in constraints if c.agent_id == aid]
            for v in validate_result(spec, cons, result, scn.grid):
                problems.append(f"{aid}: {v.rule} at t={v.t:.2f} ({v.detail})")
    except (KeyError, TypeError, ValueError) as e:
        click.echo(f"error: malformed solution: {e}", err=True)
        ctx.exit(EXIT_USAGE)
    conflicts_01 = detect_conflicts(volumes, 0.1)
    conflicts_005 = detect_conflicts(volumes, 0.05)
    for c in conflicts_01:
        problems.append(f"conflict {c.agent_a}/{c.agent_b} at t={c.t0:.2f}")
    if problems:
        for p in problems:
            click.echo(f"violation: {p}")
        ctx.exit(EXIT_VIOLATIONS)
    click.echo(f"clean at dt=0.1 ({len(volumes)} agents)")
    if conflicts_005:
        click.echo(
            f"warning: {len(conflicts_005)} conflict(s) appear at dt=0.05 "
            "(discretization gap)"
        )
    ctx.exit(EXIT_OK)


@cli.command()
@click.argument("config_path", type=click.Path())
@click.option("-o", "--out-dir", default=".", show_default=True)
@click.pass_context
def bench(ctx, config_path, out_dir):
    """Run a benchmark suite from a JSON config; write CSV and plot data."""
    try:
        with open(config_path) as f:
            cfg = json.load(f)
        scenarios = _build_scenarios(cfg, config_path)
    except (OSError, ValueError, KeyError, MapFormatError) as e:
        click.echo(f"error: bad config: {e}", err=True)
        ctx.exit(EXIT_USAGE)
    if not scenarios:
        click.echo("error: config produced zero scenarios", err=True)
        ctx.exit(EXIT_USAGE)
    limits = _limits(ctx, wall_clock=cfg.get("time_limit"))
    records, summary = bench_mod.run_suite(
        scenarios,
        methods=tuple(cfg.get("methods", ["cbs"])),
        limits=limits,
        mode=cfg.get("mode", "greedy"),
        experience=cfg.get("experience", True),
        jobs=ctx.obj["jobs"],
    )
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "results.csv")
    plot_path = os.path.join(out_dir, "plot_data.json")
    with open(csv_path, "w") as f:
        f.write(bench_mod.records_to_csv(records))
    with open(plot_path, "w") as f:
        json.dump(bench_mod.plot_data(summary), f, indent=1, sort_keys=True)
        f.write("\n")
    n_ok = sum(1 for r in records if r.status == "success")
    click.echo(f"{len(records)} runs, {n_ok} successes -> {csv_path}")
    ctx.exit(EXIT_OK)


def _build_scenarios(cfg, config_path):
    base = os.path.dirname(os.path.abspath(config_path))
    if "scenario_files" in cfg:
        return [
            bench_mod.load_scenario(os.path.join(base, p))
            for p in cfg["scenario_files"]
        ]
    if "random_map" in cfg:
        m = cfg["random_map"]
        grid = bench_mod.generate_random_map(
            m["width_m"], m["height_m"], m["resolution_m"],
            m["fraction"], m.get("seed", 0), m.get("name", "random"),
        )
    else:
        grid = load_map_file(os.path.join(base, cfg["map"]))
    return bench_mod.generate_scenarios(
        grid, cfg.get("n_agents", 2), cfg.get("count", 0), cfg.get("seed", 0)
    )


@cli.command()
@click.argument("solution_path", type=click.Path())
@click.option("-o", "--output", "output_path", default="solution.svg", show_default=True)
@click.option("--map", "map_path", default=None, help="Map JSON to draw obstacles from.")
@click.pass_context
def plot(ctx, solution_path, output_path, map_path):
    """Render a solution file to SVG."""
    try:
        with open(solution_path) as f:
            sol = json.load(f)
        grid = load_map_file(map_path) if map_path else None
    except (OSError, ValueError, MapFormatError) as e:
        click.echo(f"error: {e}", err=True)
        ctx.exit(EXIT_USAGE)
    try:
        svg = plotting.solution_svg(sol, grid)
    except (KeyError, TypeError, ValueError) as e:
        click.echo(f"error: malformed solution: {e}", err=True)
        ctx.exit(EXIT_USAGE)
    with open(output_path, "w") as f:
        f.write(svg)
        f.write("\n")
    click.echo(f"wrote {output_path}")
    ctx.exit(EXIT_OK)


@cli.command()
@click.option("--map", "map_path", default=None, help="Existing map JSON.")
@click.option("--random-map", "random_spec", default=None,
              help="WxH:RES:FRACTION, e.g. 32x32:1.0:0.1")
@click.option("--agents", "n_agents", type=int, default=2, show_default=True)
@click.option("--count", type=int, default=1, show_default=True)
@click.option("-o", "--out-dir", default=".", show_default=True)
@click.pass_context
def gen(ctx, map_path, random_spec, n_agents, count, out_dir):
    """Generate random scenarios (and optionally a random map)."""
    seed = ctx.obj["seed"]
    os.makedirs(out_dir, exist_ok=True)
    try:
        if map_path:
            grid = load_map_file(map_path)
            map_ref = os.path.abspath(map_path)
        elif random_spec:
            dims, res, frac = random_spec.split(":")
            w, h = dims.lower().split("x")
            grid = bench_mod.generate_random_map(
                float(w), float(h), float(res), float(frac), seed,
                name=f"random-{seed}",
            )
            save_map_file(grid, os.path.join(out_dir, "map.json"))
            map_ref = "map.json"  # scenarios resolve it next to themselves
        else:
            raise ValueError("need --map or --random-map")
        scenarios = bench_mod.generate_scenarios(
            grid, n_agents, count, seed, map_path=map_ref
        )
    except (OSError, ValueError, MapFormatError, bench_mod.SamplingExhausted) as e:
        click.echo(f"error: {e}", err=True)
        ctx.exit(EXIT_USAGE)
    for scn in scenarios:
        path = os.path.join(out_dir, f"{scn.scenario_id}.json")
        bench_mod.save_scenario(scn, path)
        click.echo(path)
    ctx.exit(EXIT_OK)


def main(argv=None):
    try:
        rv = cli.main(args=argv, standalone_mode=False)
        sys.exit(rv if isinstance(rv, int) else EXIT_OK)
    except click.exceptions.Exit as e:
        sys.exit(e.exit_code)
    except click.ClickException as e:
        e.show()
        sys.exit(EXIT_USAGE)
    except click.Abort:
        sys.exit(EXIT_USAGE)


if __name__ == "__main__":
    main()
