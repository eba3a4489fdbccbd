"""Full navigation pipeline on a fixture world.

point cloud -> height filter -> projection -> inflation -> improved A* ->
pruning -> reference generation -> closed-loop tracking with the local EKF,
periodic ICP map correction and moving-obstacle avoidance.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from navstack.avoidance import (AvoidanceInfeasible, DetourSegment, ObstacleObservation, build_detour,
                                detect_conflict, splice)
from navstack.control import ControllerConfig, to_ackermann
from navstack.estimation import DegenerateMatch, MapCorrection, correction_filter, icp_scan_to_map
from navstack.grid import (CellIndex, OccupancyGrid, OutOfBoundsError, PointCloud3, height_filter, inflate,
                           project_to_grid)
from navstack.planner import InvalidQuery, PlannedPath, PlanQuery, Unreachable, plan_improved_astar, prune_collinear
from navstack.qp import QpNonConvergence
from navstack.reference import ReferenceTrajectory, generate_reference
from navstack.se2 import Pose2, compose, inverse
from navstack.sim.plant import ActuatorLag
from navstack.sim.runlog import RunLog
from navstack.sim.sensors import SensorConfig
from navstack.sim.tracking import SUBSTEPS, TrackingController, advance_plant, make_loop
from navstack.sim.worlds import CORRIDOR_CANOPY, corridor_world


@dataclass(frozen=True)
class MovingObstacle:
    """Disc that walks in a straight line between ``t_start`` and ``t_end`` and stands still otherwise."""

    start: tuple[float, float]
    velocity: tuple[float, float]
    radius: float = 0.3
    t_start: float = 0.0
    t_end: float = math.inf

    def position(self, t: float) -> np.ndarray:
        tau = min(max(t, self.t_start), self.t_end) - self.t_start
        return np.asarray(self.start, dtype=float) + tau * np.asarray(self.velocity, dtype=float)

    def velocity_at(self, t: float) -> np.ndarray:
        moving = self.t_start <= t < self.t_end
        return np.asarray(self.velocity, dtype=float) if moving else np.zeros(2)

    def observe(self, t: float) -> ObstacleObservation:
        c = self.position(t)
        v = self.velocity_at(t)
        return ObstacleObservation((float(c[0]), float(c[1])), self.radius, (float(v[0]), float(v[1])), t)


@dataclass
class EndToEndConfig:
    truth: OccupancyGrid  # world used for laser returns and collision checks
    cloud: PointCloud3  # mapping input
    start: tuple[float, float]
    goal: tuple[float, float]
    controller: str = "agmpc"
    v_ref: float = 0.8
    seed: int = 0
    moving_obstacle: bool = False
    obstacles: tuple[MovingObstacle, ...] | None = None  # default: one crossing obstacle
    goal_tol: float = 0.5
    robot_radius: float = 0.3
    resolution: float = 0.25
    z_band: tuple[float, float] = (0.1, 2.0)
    corner_radius: float = 0.5
    icp_rate: float = 2.0
    sense_range: float = 6.0
    lookahead: float = 4.0
    clearance: float = 0.5
    detour_margin: float = 1.5
    settle_time: float = 8.0
    control: ControllerConfig = field(default_factory=ControllerConfig)
    sensors: SensorConfig = field(default_factory=lambda: SensorConfig(drift_xy=0.02, drift_theta=0.004))
    lag: ActuatorLag = field(default_factory=ActuatorLag)

    def __post_init__(self) -> None:
        if self.v_ref > self.control.v_max:
            raise ValueError("v_ref exceeds v_max")
        if self.goal_tol <= 0:
            raise ValueError("goal_tol must be positive")


def corridor_config(**overrides) -> EndToEndConfig:
    """The corridor fixture: S-shaped route between two staggered walls."""
    w = corridor_world()
    base = dict(truth=w.grid(), cloud=w.cloud(0, CORRIDOR_CANOPY), start=w.start, goal=w.goal)
    base.update(overrides)
    return EndToEndConfig(**base)


@dataclass
class PlanningStage:
    map_grid: OccupancyGrid
    inflated: OccupancyGrid
    path: PlannedPath
    reference: ReferenceTrajectory


def _cell(grid: OccupancyGrid, xy, what: str) -> CellIndex:
    try:
        return grid.world_to_cell(xy)
    except OutOfBoundsError as exc:
        raise InvalidQuery(f"{what} {tuple(xy)} lies outside the map") from exc


def plan_stage(cfg: EndToEndConfig) -> PlanningStage:
    """Build the map from the cloud and plan the reference; fails before any motion."""
    kept = height_filter(cfg.cloud, *cfg.z_band)
    map_grid = project_to_grid(kept, cfg.resolution, Pose2())
    inflated = inflate(map_grid, cfg.robot_radius)
    s = _cell(inflated, cfg.start, "start")
    g = _cell(inflated, cfg.goal, "goal")
    if inflated.blocked[g.row, g.col]:
        raise Unreachable(f"goal {tuple(cfg.goal)} lies inside an obstacle or its safety margin")
    if inflated.blocked[s.row, s.col]:
        raise Unreachable(f"start {tuple(cfg.start)} lies inside an obstacle or its safety margin")
    path = prune_collinear(plan_improved_astar(inflated, PlanQuery(s, g)), inflated)
    pts = np.array(path.world_points, dtype=float)
    pts[0], pts[-1] = cfg.start, cfg.goal
    if len(pts) == 2 and np.allclose(pts[0], pts[1]):
        raise InvalidQuery("start and goal coincide")
    ref = generate_reference(pts, cfg.v_ref, cfg.control.dt, cfg.corner_radius)
    return PlanningStage(map_grid, inflated, path, ref)


def crossing_obstacle(ref: ReferenceTrajectory, fraction: float = 0.55, speed: float = 0.4,
                      half_span: float = 2.0, radius: float = 0.3) -> MovingObstacle:
    """Obstacle that walks across the reference, reaching it when the reference does."""
    s = ref.arc_lengths()
    k = int(np.searchsorted(s, fraction * s[-1]))
    x, y, th = ref.poses[k]
    n = np.array([-math.sin(th), math.cos(th)])
    t_cross = float(ref.t[k])
    t_half = half_span / speed
    start = np.array([x, y]) - n * half_span
    return MovingObstacle((float(start[0]), float(start[1])), tuple(float(v) for v in n * speed), radius,
                          t_cross - t_half, t_cross + t_half)


def footprint_collides(grid: OccupancyGrid, xy, radius: float) -> bool:
    """True when a disc of ``radius`` at ``xy`` overlaps any Occupied cell."""
    centers = grid.occupied_centers
    if len(centers) == 0:
        return False
    half = grid.resolution / 2
    idx = grid.occupied_tree.query_ball_point(np.asarray(xy, dtype=float), radius + half * math.sqrt(2))
    if not idx:
        return False
    local = grid.to_grid_frame(np.asarray(xy, dtype=float).reshape(1, 2))[0]
    c = grid.to_grid_frame(centers[idx])
    gap = np.maximum(np.abs(local - c) - half, 0.0)
    return bool(np.any(np.hypot(gap[:, 0], gap[:, 1]) < radius))


class _ActiveTrajectory:
    """The global reference plus at most one pending detour spliced into it."""

    def __init__(self, ref: ReferenceTrajectory, cfg: EndToEndConfig, grid: OccupancyGrid):
        self.base = ref
        self.active = ref
        self.pending: DetourSegment | None = None
        self.cfg = cfg
        self.grid = grid
        self.detours = 0
        self.resplices = 0

    def _detour(self, traj: ReferenceTrajectory, k: int, obs) -> DetourSegment | None:
        c = self.cfg
        conflict = detect_conflict(traj, obs, c.lookahead, c.clearance, k, c.detour_margin)
        if conflict is None:
            return None
        return build_detour(traj, conflict.entry_index, conflict.exit_index, conflict.obstacle, c.clearance,
                            c.robot_radius, v_ref=c.v_ref, grid=self.grid)

    def update(self, k: int, obs) -> None:
        dt = self.cfg.control.dt
        if self.pending is not None and k < self.pending.entry_index:
            # not yet committed: rebuild against the undisturbed route, or drop it
            d = self._detour(self.base, k, obs)
            self.active = self.base if d is None else splice(self.base, d, self.cfg.v_ref, dt)
            self.pending = d
            self.resplices += d is not None
            return
        if self.pending is not None:
            self.base = self.active
            self.pending = None
        d = self._detour(self.active, k, obs)
        if d is not None:
            self.base = self.active
            self.active = splice(self.base, d, self.cfg.v_ref, dt)
            self.pending = d
            self.detours += 1


def run_end_to_end(cfg: EndToEndConfig, stage: PlanningStage | None = None) -> RunLog:
    """Plan, then drive to the goal.

    Planning failures raise before motion.  Avoidance infeasibility or a
    solver failure ends the run early with ``success = False`` and a
    diagnosis; ``meta['failure']`` names the cause.
    """
    stage = stage or plan_stage(cfg)
    ctl = cfg.control
    ref = stage.reference
    obstacles = cfg.obstacles
    if obstacles is None:
        obstacles = (crossing_obstacle(ref),) if cfg.moving_obstacle else ()

    th0 = float(ref.poses[0, 2])
    start = Pose2(cfg.start[0], cfg.start[1], th0)
    parts = make_loop(start, 0.0, cfg.sensors, cfg.seed, ctl.wheelbase)
    local0 = parts.estimator.state.pose
    corr = MapCorrection(compose(start, inverse(local0)), 0.0, 0.0, start)
    ctrl = TrackingController("agmpc" if cfg.controller == "agmpc" else "mpc", ctl)
    traj = _ActiveTrajectory(ref, cfg, stage.inflated)
    icp_every = max(1, round(1.0 / (cfg.icp_rate * ctl.dt)))

    log = RunLog(reference_path=ref.positions.copy(), closed_path=False,
                 meta={"controller": cfg.controller, "seed": cfg.seed, "v_ref": cfg.v_ref,
                       "waypoints": stage.path.world_points.copy(), "failure": "",
                       "rmse_definition": "spatial: true position to nearest reference-path point"})
    trace, obstacle_trace = [], []
    collisions = 0
    icp_updates = 0
    sub_dt = ctl.dt / SUBSTEPS
    max_ticks = len(ref) + int(round(cfg.settle_time / ctl.dt))
    k = 0
    while True:
        t = k * ctl.dt
        parts.estimator.advance_to(t)
        local = parts.estimator.state
        if k % icp_every == 0 and k > 0:
            scan = parts.sensors.laser(parts.plant, cfg.truth)
            try:
                raw = icp_scan_to_map(scan, stage.map_grid, compose(corr.T_ML, local.pose), local=local.pose,
                                      stamp=t)
                corr = correction_filter(corr, raw)
                icp_updates += 1
            except DegenerateMatch:
                pass
        est = compose(corr.T_ML, local.pose)

        seen = [o.observe(t) for o in obstacles
                if np.hypot(*(o.position(t) - (est.x, est.y))) <= cfg.sense_range]
        try:
            traj.update(k, seen)
        except AvoidanceInfeasible as exc:
            log.complete, log.success = False, False
            log.diagnosis, log.meta["failure"] = f"avoidance infeasible at t={t:.2f}: {exc}", "avoidance"
            break

        window = traj.active.window(k, ctl.horizon)
        t0 = time.perf_counter()
        try:
            u = ctrl(est, window)
        except (QpNonConvergence, np.linalg.LinAlgError) as exc:
            log.complete, log.success = False, False
            log.diagnosis, log.meta["failure"] = f"controller failure at t={t:.2f}: {exc}", "solver"
            break
        cmd = to_ackermann(u, ctl.wheelbase, ctl.v_eps, ctl.delta_max)
        solve_ms = (time.perf_counter() - t0) * 1e3
        truth = parts.plant.pose
        rp = window[0][0]
        log.append(t, truth.x, truth.y, truth.theta, est.x, est.y, est.theta, rp.x, rp.y, rp.theta,
                   u.v, u.omega, cmd.delta, solve_ms)
        log.estimation.append((t, est.x, est.y, est.theta, local.v, local.omega, truth.x, truth.y, truth.theta))

        before = parts.substep
        advance_plant(parts, cmd, ctl, cfg.lag, cfg.sensors)
        p = parts.plant.pose
        ts = before * sub_dt + ctl.dt
        trace.append((ts, p.x, p.y))
        obstacle_trace.append([o.position(ts) for o in obstacles])
        hit = footprint_collides(cfg.truth, (p.x, p.y), cfg.robot_radius) or any(
            np.hypot(*(o.position(ts) - (p.x, p.y))) < o.radius + cfg.robot_radius for o in obstacles)
        collisions += bool(hit)

        k += 1
        near = math.hypot(est.x - cfg.goal[0], est.y - cfg.goal[1]) < cfg.goal_tol
        if (k >= len(traj.active) and near and abs(parts.plant.v_actual) < 0.05) or k >= max_ticks + (
                len(traj.active) - len(ref)):
            break

    final = log.records[-1] if log.records else None
    err = math.hypot(final[4] - cfg.goal[0], final[5] - cfg.goal[1]) if final else math.inf
    if log.success is None:
        log.success = err <= cfg.goal_tol and collisions == 0
        if not log.success:
            log.diagnosis = f"final error {err:.3f} m, {collisions} collision ticks"
    log.meta.update(collisions=collisions, detours=traj.detours, resplices=traj.resplices,
                    icp_updates=icp_updates, final_error=err, true_trace=np.array(trace),
                    obstacle_trace=np.array(obstacle_trace).reshape(len(trace), len(obstacles), 2),
                    obstacles=obstacles, active_path=traj.active.positions.copy())
    return log
