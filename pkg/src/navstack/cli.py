"""Command-line entry point: ``navstack <subcommand> ...``.

Exit codes: 0 success, 1 run finished without reaching the goal, 2 invalid
input, 3 infeasible (unreachable goal or no safe detour), 4 solver failure.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from navstack.control import ConfigError, ControllerConfig
from navstack.grid import GridError, load_cloud, load_grid, save_cloud, save_grid
from navstack.planner import (InvalidQuery, PlanQuery, Unreachable, path_metrics, plan_baseline_astar,
                              plan_improved_astar, prune_collinear)
from navstack.qp import QpNonConvergence
from navstack.reference import generate_reference

EXIT_OK, EXIT_FAILED, EXIT_INVALID, EXIT_INFEASIBLE, EXIT_SOLVER = 0, 1, 2, 3, 4


def _pair(text: str, kind=float) -> tuple:
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected two comma-separated values, got {text!r}")
    try:
        return kind(parts[0]), kind(parts[1])
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _cell_pair(text: str) -> tuple[int, int]:
    return _pair(text, int)


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def cmd_plan(a: argparse.Namespace) -> int:
    grid = load_grid(a.map)
    q = PlanQuery(a.start, a.goal, a.turn_cost, not a.no_early_exit)
    if a.baseline:
        path = plan_baseline_astar(grid, q)
    else:
        path = prune_collinear(plan_improved_astar(grid, q), grid)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_rows(out / "path.csv", ("col", "row", "x", "y"),
                [(c.col, c.row, f"{p[0]:.9g}", f"{p[1]:.9g}") for c, p in zip(path.cells, path.world_points)])
    if len(path.cells) >= 2:
        m = path_metrics(path)
        _write_rows(out / "metrics.csv", ("metric", "value"),
                    [("length_m", m["length"]), ("total_turning_angle_deg", m["total_turning_angle"]),
                     ("inflection_count", m["inflection_count"]), ("cost_m", path.cost),
                     ("expansions", path.expansions)])
        generate_reference(path.world_points, a.speed, 1.0 / 30.0, a.corner_radius).to_csv(out / "reference.csv")
    print(f"planned {len(path.cells)} waypoints, cost {path.cost:.3f} m, {path.expansions} expansions")
    return EXIT_OK


def cmd_bench_plan(a: argparse.Namespace) -> int:
    from navstack.sim.benchmark import run_planning_benchmark

    grid = load_grid(a.map)
    res = run_planning_benchmark(grid, a.queries, a.seed, d_s=a.robot_radius)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for (s, g), b, i in zip(res.queries, res.baseline, res.improved):
        rows.append((s.col, s.row, g.col, g.row, *(f"{b[k]:.6g}" for k in b), *(f"{i[k]:.6g}" for k in i)))
    keys = list(res.baseline[0])
    _write_rows(out / "queries.csv", ("start_col", "start_row", "goal_col", "goal_row",
                                      *(f"baseline_{k}" for k in keys), *(f"improved_{k}" for k in keys)), rows)
    _write_rows(out / "summary.csv", ("metric", "baseline_mean", "improved_mean"),
                [(k, f"{b:.6g}", f"{i:.6g}") for k, b, i in res.table()])
    for k, b, i in res.table():
        print(f"{k:22s} baseline {b:10.3f}   improved {i:10.3f}")
    return EXIT_OK


def _controller_config(path) -> ControllerConfig:
    return ControllerConfig.from_file(path) if path else ControllerConfig()


def cmd_track(a: argparse.Namespace) -> int:
    from navstack.sim.report import emit_report
    from navstack.sim.tracking import ScenarioConfig, run_tracking_experiment

    sc = ScenarioConfig(trajectory=a.traj, controller=a.controller, v_ref=a.speed, seed=a.seed,
                        control=_controller_config(a.config))
    run = run_tracking_experiment(sc)
    if len(run):
        emit_report(run, a.out)
    print(f"{a.traj}/{a.controller} at {a.speed} m/s: RMSE {run.rmse:.4f} m over {len(run)} ticks")
    if not run.complete:
        print(run.diagnosis, file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def cmd_e2e(a: argparse.Namespace) -> int:
    from navstack.sim.endtoend import EndToEndConfig, plan_stage, run_end_to_end
    from navstack.sim.report import emit_report

    cfg = EndToEndConfig(truth=load_grid(a.map), cloud=load_cloud(a.cloud), start=a.start, goal=a.goal,
                         controller=a.controller, seed=a.seed, moving_obstacle=a.moving_obstacle,
                         control=_controller_config(a.config))
    stage = plan_stage(cfg)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    stage.reference.to_csv(out / "reference.csv")
    run = run_end_to_end(cfg, stage)
    if len(run):
        emit_report(run, out)
    m = run.meta
    print(f"success={run.success} final_error={m['final_error']:.3f} m detours={m['detours']} "
          f"collisions={m['collisions']} icp_updates={m['icp_updates']}")
    if run.success:
        return EXIT_OK
    print(run.diagnosis, file=sys.stderr)
    return {"avoidance": EXIT_INFEASIBLE, "solver": EXIT_SOLVER}.get(m["failure"], EXIT_FAILED)


def cmd_fixtures(a: argparse.Namespace) -> int:
    from navstack.sim.worlds import CORRIDOR_CANOPY, campus_map, corridor_world, structured_room

    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    w = corridor_world()
    save_grid(w.grid(), out / "corridor.grid")
    save_cloud(w.cloud(0, CORRIDOR_CANOPY), out / "corridor.xyz")
    save_grid(campus_map(), out / "campus.grid")
    save_grid(structured_room().grid(), out / "room.grid")
    ControllerConfig().to_file(out / "controller.cfg")
    print(f"wrote fixtures to {out} (corridor start {w.start}, goal {w.goal})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="navstack", description="Grid planning, tracking control and simulation.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="plan on an (already inflated) grid map")
    p.add_argument("--map", required=True)
    p.add_argument("--start", required=True, type=_cell_pair, help="col,row")
    p.add_argument("--goal", required=True, type=_cell_pair, help="col,row")
    p.add_argument("--baseline", action="store_true", help="plain 8-connected A*")
    p.add_argument("--turn-cost", type=float, default=None, help="meters (default 2 x resolution)")
    p.add_argument("--no-early-exit", action="store_true")
    p.add_argument("--speed", type=float, default=1.0, help="reference speed for reference.csv")
    p.add_argument("--corner-radius", type=float, default=0.5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("bench-plan", help="randomized baseline vs improved planner comparison")
    p.add_argument("--map", required=True)
    p.add_argument("--queries", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--robot-radius", type=float, default=0.3, help="inflation distance D_s in meters")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench_plan)

    p = sub.add_parser("track", help="closed-loop tracking of a benchmark curve")
    p.add_argument("--traj", choices=("lemniscate", "square"), required=True)
    p.add_argument("--controller", choices=("mpc", "agmpc"), required=True)
    p.add_argument("--speed", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("e2e", help="cloud-to-goal navigation run")
    p.add_argument("--map", required=True, help="ground-truth grid for laser and collision checks")
    p.add_argument("--cloud", required=True, help="x y z point cloud used to build the planning map")
    p.add_argument("--start", required=True, type=_pair, help="x,y in meters")
    p.add_argument("--goal", required=True, type=_pair, help="x,y in meters")
    p.add_argument("--controller", choices=("mpc", "agmpc"), default="agmpc")
    p.add_argument("--moving-obstacle", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_e2e)

    p = sub.add_parser("fixtures", help="write the fixture maps, cloud and default controller config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fixtures)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        a = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    try:
        return a.func(a)
    except Unreachable as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except QpNonConvergence as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (InvalidQuery, GridError, ConfigError, ValueError, OSError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
