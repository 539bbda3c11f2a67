"""Command line: plan, simulate, sweep and bench.

Exit codes: 0 success, 2 invalid scenario or arguments, 3 planning failure,
4 simulation failure.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import artifacts as art
from .environment import Geofence, StaticObstacle, WorldState, build_grid
from .errors import PlanningError, ScenarioError, SimulationError
from .global_planner import GridGraph, astar, build_prm, sample_safe_cells
from .scenario_file import LoadedScenario, example_names, example_path, load_scenario
from .simulator import SWEEPABLE, plan_mission, run, sweep_experiment

EXIT_OK, EXIT_VALIDATION, EXIT_PLANNING, EXIT_SIMULATION = 0, 2, 3, 4


class UsageError(ValueError):
    pass


# ---- scenario resolution ---------------------------------------------------

def resolve_scenario(arg: str) -> Path:
    """A path, or the name of a bundled example scenario."""
    p = Path(arg)
    if p.exists():
        return p
    if arg in example_names():
        return example_path(arg)
    raise ScenarioError(f"{arg}: no such file or bundled example ({', '.join(example_names())})")


def _load(args) -> LoadedScenario:
    return load_scenario(resolve_scenario(args.scenario), args.seed)


# ---- plan ------------------------------------------------------------------

def cmd_plan(args) -> int:
    loaded = _load(args)
    sc, frame = loaded.scenario, loaded.frame
    gp, traj = plan_mission(sc)
    out = art.OutputDir(args.out)
    grid = gp.grid
    centers = grid.centers()
    art.write_csv(out.file("grid.csv"), ["x", "y", "z", "risk"],
                  np.column_stack([centers, grid.risk.ravel()]))
    ms = gp.milestones
    mpos = np.array([m.position for m in ms]) if ms else np.zeros((0, 3))
    mlla = art.to_lon_lat_alt(frame, mpos) if ms else np.zeros((0, 3))
    art.write_csv(out.file("milestones.csv"), ["tour_index", "x", "y", "z", "lat", "lon", "alt"],
                  [(m.tour_index, *m.position, g[1], g[0], g[2]) for m, g in zip(ms, mlla)])
    nodes = gp.positions
    nlla = art.to_lon_lat_alt(frame, nodes)
    is_ms = set(gp.milestone_nodes)
    art.write_csv(out.file("global_path.csv"), ["index", "x", "y", "z", "lat", "lon", "alt", "heading_deg", "milestone"],
                  [(i, *n.position, g[1], g[0], g[2], math.degrees(n.psi), int(i in is_ms))
                   for i, (n, g) in enumerate(zip(gp.nodes, nlla))])
    tlla = art.to_lon_lat_alt(frame, traj.points)
    art.write_csv(out.file("planned_trajectory.csv"), ["index", "x", "y", "z", "lat", "lon", "alt", "heading_deg"],
                  [(i, *p, g[1], g[0], g[2], math.degrees(psi))
                   for i, (p, g, psi) in enumerate(zip(traj.points, tlla, traj.psi))])
    feats = art.base_features(frame, sc.world)
    feats.append(art.feature(art.line(frame, nodes), kind="global_path", length_m=round(gp.length, 3)))
    feats.append(art.feature(art.line(frame, traj.points), kind="planned_trajectory", length_m=round(traj.length, 3)))
    for m in ms:
        feats.append(art.feature(art.point(frame, m.position), kind="milestone", tour_index=m.tour_index))
    art.write_geojson(out.file("path.geojson"), feats)
    art.write_svg(out.file("plan.svg"), sc.world, planned=traj.points, milestones=mpos, start=sc.start, title=sc.name)
    out.close()
    print(f"planned {len(ms)} milestones, tour {traj.length:.1f} m -> {out.path}")
    return EXIT_OK


# ---- simulate --------------------------------------------------------------

METRIC_COLUMNS = ("scenario", "seed", "surveyed_fraction", "path_length", "min_separation", "min_separation_time",
                  "mission_time", "completed", "termination", "planned_length", "milestones_visited",
                  "milestones_unsafe", "milestones_total")


def cmd_simulate(args) -> int:
    loaded = _load(args)
    sc, frame = loaded.scenario, loaded.frame
    res = run(sc)
    rep = res.report
    out = art.OutputDir(args.out)
    row = {"scenario": sc.name, "seed": sc.rng_seed, **rep.as_row()}
    art.write_csv(out.file("metrics.csv"), METRIC_COLUMNS, [[row[k] for k in METRIC_COLUMNS]])
    art.write_csv(out.file("decisions.csv"), ["t", "action", "reason", "milestone_states"], rep.decision_log, 3)
    art.write_csv(out.file("visits.csv"), ["t", "milestone", "status"], rep.visit_log, 3)
    rows = res.rows
    lla = art.to_lon_lat_alt(frame, rows[:, 1:4])
    art.write_csv(out.file("trajectory.csv"),
                  ["t", "x", "y", "z", "lat", "lon", "alt", "heading_deg", "pitch_deg", "v", "separation"],
                  [(r[0], r[1], r[2], r[3], g[1], g[0], g[2], math.degrees(r[4]), math.degrees(r[5]), r[6], s)
                   for r, g, s in zip(rows, lla, res.separation)])
    feats = art.base_features(frame, res.world)
    feats.append(art.feature(art.line(frame, res.planned.points), kind="planned_trajectory",
                             length_m=round(res.planned.length, 3)))
    feats.append(art.feature(art.line(frame, rows[:, 1:4]), kind="flown_trajectory",
                             length_m=round(rep.path_length, 3), min_separation_m=round(rep.min_separation, 3)))
    for m in res.milestones:
        feats.append(art.feature(art.point(frame, m.position), kind="milestone", tour_index=m.tour_index,
                                 status=m.status))
    art.write_geojson(out.file("trajectory.geojson"), feats)
    mpos = np.array([m.position for m in res.milestones]) if res.milestones else None
    art.write_svg(out.file("plot.svg"), res.world, planned=res.planned.points, flown=rows[:, 1:4], milestones=mpos,
                  start=sc.start, t_end=float(rows[-1, 0]), title=sc.name)
    out.close()
    print(f"{sc.name}: {rep.termination}, surveyed {rep.surveyed_fraction:.3f}, path {rep.path_length:.1f} m, "
          f"min separation {rep.min_separation:.2f} m -> {out.path}")
    return EXIT_OK


# ---- sweep -----------------------------------------------------------------

def parse_vary(text: str) -> tuple[str, list[float]]:
    """``name=a,b,c`` or ``name=start:stop:step`` (stop inclusive)."""
    if "=" not in text:
        raise UsageError("--vary expects name=values, e.g. delta=0.2:0.8:0.2")
    name, spec = text.split("=", 1)
    name = name.strip()
    if name not in SWEEPABLE:
        raise UsageError(f"--vary: cannot sweep {name!r}; choose from {', '.join(sorted(SWEEPABLE))}")
    try:
        if ":" in spec:
            a, b, step = (float(x) for x in spec.split(":"))
            if step <= 0 or b < a:
                raise ValueError
            n = int(math.floor((b - a) / step + 1e-9)) + 1
            values = [round(a + i * step, 10) for i in range(n)]
        else:
            values = [float(x) for x in spec.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"--vary: cannot parse values {spec!r}") from None
    if not values:
        raise UsageError("--vary: no values given")
    return name, values


def cmd_sweep(args) -> int:
    if not args.vary:
        raise UsageError("sweep needs --vary")
    name, values = parse_vary(args.vary)
    loaded = _load(args)
    try:
        seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else None
    except ValueError:
        raise UsageError(f"--seeds: expected comma-separated integers, got {args.seeds!r}") from None
    if seeds is not None and (not seeds or min(seeds) < 0):
        raise UsageError("--seeds: seeds must be non-negative")
    rows = sweep_experiment(loaded.scenario, name, values, seeds)
    cols = ["param", "value", "seeds", "surveyed_fraction", "path_length", "min_separation", "completed"]
    table = [[r[c] for c in cols] for r in rows]
    if args.out:
        out = art.OutputDir(args.out)
        art.write_csv(out.file("sweep.csv"), cols, table)
        out.close()
    print(",".join(cols))
    for r in table:
        print(",".join(art.fmt(v, 4) for v in r))
    return EXIT_OK


# ---- bench -----------------------------------------------------------------

@dataclass
class BenchResult:
    dims: tuple[int, int, int]
    pairs: int
    grid_expansions: int
    prm_expansions: int
    grid_time: float
    prm_time: float
    prm_nodes: int
    prm_build_time: float

    @property
    def speedup(self) -> float:
        return self.grid_time / self.prm_time if self.prm_time > 0 else math.inf


def parse_dims(text: str) -> list[tuple[int, int, int]]:
    out = []
    for part in text.split(","):
        bits = part.lower().split("x")
        try:
            d = tuple(int(b) for b in bits)
        except ValueError:
            raise UsageError(f"--dims: cannot parse {part!r}") from None
        if len(d) != 3 or min(d) < 10:
            raise UsageError(f"--dims: {part!r} must be NxNxN with every axis >= 10")
        out.append(d)
    return out


def run_bench(dims, seed: int = 0, pairs: int = 5, delta: float = 0.5, r_min: float = 22.0,
              obstacle_density: float = 1.0 / 60.0, sample_fraction: float = 0.1, k_knn: int = 10) -> BenchResult:
    """Full-grid A* against A* on a prebuilt PRM, between identical endpoint pairs.

    The configuration space is an (nx, ny, nz) grid over a seeded field of
    random cylinders. Endpoints are roadmap nodes, which are also grid cell
    centres. Only the searches are timed; neither search applies the
    kinematic edge filters, so both solve the same geometric problem.
    """
    nx, ny, nz = dims
    res = 2.0 * r_min
    w, h, z = nx * res, ny * res, nz * res
    fence = Geofence(((0.0, 0.0), (w, 0.0), (w, h), (0.0, h)), 0.0, z)
    rng = np.random.default_rng(seed)
    n_obst = int(round(nx * ny * obstacle_density))
    obstacles = [StaticObstacle((float(rng.uniform(0, w)), float(rng.uniform(0, h))), float(rng.uniform(20, 60)),
                                float(rng.uniform(0.3, 1.0) * z)) for _ in range(n_obst)]
    grid = build_grid(WorldState(fence, obstacles), 0.0, r_min)
    safe = int((grid.risk < delta).sum())
    t0 = time.perf_counter()
    samples = sample_safe_cells(grid, delta, max(50, int(safe * sample_fraction)), seed)
    prm = build_prm(samples, k_knn, grid, delta, None)
    build_time = time.perf_counter() - t0
    full = GridGraph(grid, delta)
    order = rng.permutation(len(prm))
    ge = pe = done = 0
    gt = pt = 0.0
    for a, b in zip(order[0::2], order[1::2]):
        if done == pairs:
            break
        a, b = int(a), int(b)
        try:
            t0 = time.perf_counter()
            rp = astar(prm, a, b, None)
            t1 = time.perf_counter()
        except PlanningError:
            continue  # endpoints in different roadmap components
        rg = astar(full, full.cell(prm.position(a)), full.cell(prm.position(b)), None)
        t2 = time.perf_counter()
        pt += t1 - t0
        gt += t2 - t1
        pe += rp.expansions
        ge += rg.expansions
        done += 1
    return BenchResult(tuple(dims), done, ge, pe, gt, pt, len(prm), build_time)


def cmd_bench(args) -> int:
    dims = parse_dims(args.dims)
    if args.pairs < 1:
        raise UsageError("--pairs must be at least 1")
    results = [run_bench(d, args.seed if args.seed is not None else 0, args.pairs) for d in dims]
    cols = ["dims", "pairs", "grid_expansions", "prm_expansions", "grid_time_s", "prm_time_s", "speedup",
            "prm_nodes", "prm_build_time_s"]
    table = [["x".join(map(str, r.dims)), r.pairs, r.grid_expansions, r.prm_expansions, r.grid_time, r.prm_time,
              r.speedup, r.prm_nodes, r.prm_build_time] for r in results]
    if args.out:
        out = art.OutputDir(args.out)
        art.write_csv(out.file("bench.csv"), cols, table)
        out.close()
    print(",".join(cols))
    for r in table:
        print(",".join(art.fmt(v, 4) for v in r))
    return EXIT_OK


# ---- entry point -----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="uavsurvey", description="Survey path planning and mission simulation.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_required: bool):
        sp.add_argument("--scenario", required=True, help="scenario JSON file or bundled example name")
        sp.add_argument("--out", required=out_required, help="output directory (rewritten)")
        sp.add_argument("--seed", type=int, default=None, help="override the scenario rng_seed")

    common(sub.add_parser("plan", help="plan the global tour and write path artifacts"), True)
    common(sub.add_parser("simulate", help="fly a mission and write metrics, logs, trajectory and plot"), True)
    sw = sub.add_parser("sweep", help="repeat a mission over a parameter range")
    common(sw, False)
    sw.add_argument("--vary", required=True, help="delta=0.2:0.8:0.2 or k_milestones=4,8,12,16")
    sw.add_argument("--seeds", default=None, help="comma-separated seeds to average over (default: scenario seed)")
    b = sub.add_parser("bench", help="full-grid A* against PRM+A*")
    b.add_argument("--dims", default="25x30x27,50x50x50", help="comma-separated NxNxN grid sizes")
    b.add_argument("--seed", type=int, default=None)
    b.add_argument("--pairs", type=int, default=5, help="endpoint pairs per size")
    b.add_argument("--out", default=None)
    return p


COMMANDS = {"plan": cmd_plan, "simulate": cmd_simulate, "sweep": cmd_sweep, "bench": cmd_bench}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_VALIDATION if exc.code else EXIT_OK
    if getattr(args, "seed", None) is not None and args.seed < 0:
        print("error: --seed must be non-negative", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        return COMMANDS[args.command](args)
    except (ScenarioError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except SimulationError as exc:
        print(f"simulation failed: {exc}", file=sys.stderr)
        return EXIT_SIMULATION
    except PlanningError as exc:
        print(f"planning failed: {exc}", file=sys.stderr)
        return EXIT_PLANNING


if __name__ == "__main__":
    sys.exit(main())
