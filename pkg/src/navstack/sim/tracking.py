"""Closed-loop trajectory tracking: estimator -> controller -> plant."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from navstack.control import (ControlInput, ControllerConfig, ControllerState, solve_agmpc,
                              solve_baseline_mpc, to_ackermann)
from navstack.estimation import EkfState, LocalEstimator
from navstack.reference import ReferenceTrajectory, generate_reference
from navstack.se2 import Pose2, tracking_error
from navstack.sim.plant import ActuatorLag, BicycleState, step_bicycle
from navstack.sim.references import lemniscate_ref, square_ref
from navstack.sim.runlog import RunLog
from navstack.sim.sensors import SensorConfig, SensorSuite

CONTROLLERS = ("mpc", "agmpc")
SUBSTEPS = 10  # plant steps per control tick (300 Hz plant at 30 Hz control)


class TrackingController:
    """Receding-horizon wrapper holding warm starts and the A-GMPC input memory."""

    def __init__(self, kind: str, cfg: ControllerConfig):
        if kind not in CONTROLLERS:
            raise ValueError(f"unknown controller {kind!r}")
        self.kind = kind
        self.cfg = cfg
        self.state = ControllerState()
        self._warm: np.ndarray | None = None
        self.last = None

    def reset(self) -> None:
        self.state = ControllerState()
        self._warm = None

    def __call__(self, pose: Pose2, window: list[tuple[Pose2, ControlInput]]) -> ControlInput:
        if self.kind == "agmpc":
            xi0 = tracking_error(window[0][0], pose)
            sol = solve_agmpc(xi0, self.state, [u for _, u in window], self.cfg, warm_start=self._warm)
            self.state = sol.state
        else:
            sol = solve_baseline_mpc(pose, window, self.cfg, warm_start=self._warm)
        z = sol.u_tilde.ravel()
        self._warm = np.concatenate([z[2:], z[-2:]])
        self.last = sol
        return sol.u0


@dataclass
class ScenarioConfig:
    """Everything that defines one tracking run."""

    trajectory: str = "square"  # lemniscate | square | path
    controller: str = "agmpc"  # mpc | agmpc
    v_ref: float = 1.0
    seed: int = 0
    lemniscate_a: float = 4.0
    square_side: float = 6.0
    corner_radius: float = 0.8
    waypoints: np.ndarray | None = None  # polyline for trajectory="path", e.g. a planned route
    duration: float | None = None  # default: one lap
    control: ControllerConfig = field(default_factory=ControllerConfig)
    sensors: SensorConfig = field(default_factory=SensorConfig)
    lag: ActuatorLag = field(default_factory=ActuatorLag)
    use_estimator: bool = True

    def __post_init__(self) -> None:
        if self.v_ref > self.control.v_max:
            raise ValueError("v_ref exceeds v_max")
        if self.duration is not None and self.duration <= 0:
            raise ValueError("duration must be positive")
        if self.controller not in CONTROLLERS:
            raise ValueError(f"unknown controller {self.controller!r}")
        if self.trajectory == "path" and self.waypoints is None:
            raise ValueError("trajectory 'path' needs waypoints")

    def reference(self) -> ReferenceTrajectory:
        dt = self.control.dt
        if self.trajectory == "lemniscate":
            return lemniscate_ref(self.lemniscate_a, self.v_ref, dt)
        if self.trajectory == "square":
            return square_ref(self.square_side, self.corner_radius, self.v_ref, dt)
        if self.trajectory == "path":
            return generate_reference(np.asarray(self.waypoints, dtype=float), self.v_ref, dt,
                                      self.corner_radius)
        raise ValueError(f"unknown trajectory {self.trajectory!r}")


@dataclass
class LoopParts:
    plant: BicycleState
    estimator: LocalEstimator
    sensors: SensorSuite
    substep: int = 0


def make_loop(start: Pose2, v0: float, sc_sensors: SensorConfig, seed: int, wheelbase: float) -> LoopParts:
    plant = BicycleState(start, v0, 0.0)
    suite = SensorSuite(sc_sensors, seed, wheelbase)
    est = LocalEstimator(EkfState.initial(suite.odom_pose(plant, 0.0)))
    est.state = EkfState(est.state.pose, v0, 0.0, est.state.covariance, 0.0)
    return LoopParts(plant, est, suite)


def advance_plant(parts: LoopParts, cmd, cfg: ControllerConfig, lag: ActuatorLag, sc_sensors: SensorConfig,
                  use_estimator: bool = True) -> None:
    """Run one control period of plant substeps, feeding sensors into the estimator."""
    sub_dt = cfg.dt / SUBSTEPS
    plant_rate = SUBSTEPS / cfg.dt
    every = {kind: max(1, round(plant_rate / rate)) for kind, rate in
             (("scan_odom", sc_sensors.scan_rate), ("wheel_odom", sc_sensors.wheel_rate),
              ("imu_yaw", sc_sensors.imu_rate))}
    for _ in range(SUBSTEPS):
        parts.plant = step_bicycle(parts.plant, cmd, sub_dt, cfg.wheelbase, lag, cfg.delta_max)
        parts.substep += 1
        stamp = parts.substep * sub_dt
        if not use_estimator:
            continue
        for kind in ("wheel_odom", "imu_yaw", "scan_odom"):
            if parts.substep % every[kind] == 0:
                parts.estimator.fuse(getattr(parts.sensors, kind)(parts.plant, stamp))


def run_tracking_experiment(sc: ScenarioConfig) -> RunLog:
    """Track a benchmark curve at 30 Hz and log truth, estimate, reference and commands."""
    cfg = sc.control
    ref = sc.reference()
    n_ticks = len(ref) if sc.duration is None else int(round(sc.duration / cfg.dt))
    ctrl = TrackingController(sc.controller, cfg)
    parts = make_loop(ref.pose(0), float(ref.inputs[0, 0]), sc.sensors, sc.seed, cfg.wheelbase)

    log = RunLog(reference_path=ref.positions.copy(), closed_path=ref.closed,
                 meta={"trajectory": sc.trajectory, "controller": sc.controller, "v_ref": sc.v_ref,
                       "seed": sc.seed, "rmse_definition": "spatial: true position to nearest reference-path point"})
    for k in range(n_ticks):
        t = k * cfg.dt
        parts.estimator.advance_to(t)
        est_pose = parts.estimator.state.pose if sc.use_estimator else parts.plant.pose
        window = ref.window(k, cfg.horizon)
        t0 = time.perf_counter()
        try:
            u = ctrl(est_pose, window)
        except Exception as exc:  # solver failure ends the run with a partial log
            log.complete = False
            log.diagnosis = f"controller failure at t={t:.3f}: {exc}"
            break
        cmd = to_ackermann(u, cfg.wheelbase, cfg.v_eps, cfg.delta_max)
        solve_ms = (time.perf_counter() - t0) * 1e3
        truth = parts.plant.pose
        ref_pose = window[0][0]
        log.append(t, truth.x, truth.y, truth.theta, est_pose.x, est_pose.y, est_pose.theta,
                   ref_pose.x, ref_pose.y, ref_pose.theta, u.v, u.omega, cmd.delta, solve_ms)
        es = parts.estimator.state
        log.estimation.append((t, est_pose.x, est_pose.y, est_pose.theta, es.v, es.omega,
                               truth.x, truth.y, truth.theta))
        advance_plant(parts, cmd, cfg, sc.lag, sc.sensors, sc.use_estimator)
    return log
