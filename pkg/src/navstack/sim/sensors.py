"""Seeded synthetic sensors standing in for the on-board sensor suite.

Each sensor draws from its own child RNG stream so changing one sensor's rate
or noise does not perturb the others.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from navstack.estimation import LaserScan2, Measurement
from navstack.grid import OccupancyGrid
from navstack.se2 import Pose2, compose
from navstack.sim.plant import BicycleState


@dataclass(frozen=True)
class SensorConfig:
    scan_rate: float = 10.0
    wheel_rate: float = 100.0
    imu_rate: float = 100.0
    laser_rate: float = 10.0
    sigma_xy: float = 0.05
    sigma_theta: float = 0.02
    sigma_v: float = 0.05
    sigma_omega: float = 0.05
    sigma_imu: float = 0.01
    n_beams: int = 360
    max_range: float = 10.0
    sigma_range: float = 0.01
    # random-walk drift of the odom frame, per sqrt(second)
    drift_xy: float = 0.0
    drift_theta: float = 0.0
    odom_offset: Pose2 = Pose2()

    def scaled(self, factor: float) -> SensorConfig:
        """Copy with scan-odometry noise multiplied by ``factor``."""
        return SensorConfig(**{**self.__dict__, "sigma_xy": self.sigma_xy * factor,
                               "sigma_theta": self.sigma_theta * factor})

    @classmethod
    def noiseless(cls, **overrides) -> SensorConfig:
        base = dict(sigma_xy=0.0, sigma_theta=0.0, sigma_v=0.0, sigma_omega=0.0, sigma_imu=0.0,
                    sigma_range=0.0)
        base.update(overrides)
        return cls(**base)


def _floor_var(sigma: float) -> float:
    # a zero-noise sensor still reports a tiny variance so the filter stays well posed
    return max(sigma, 1e-6) ** 2


class SensorSuite:
    """Produces measurements from the true plant state on demand."""

    def __init__(self, cfg: SensorConfig, seed: int, wheelbase: float):
        self.cfg = cfg
        self.wheelbase = wheelbase
        children = np.random.SeedSequence(seed).spawn(5)
        self._rng_scan, self._rng_wheel, self._rng_imu, self._rng_laser, self._rng_drift = (
            np.random.default_rng(c) for c in children)
        self.odom_offset = cfg.odom_offset
        self._drift_stamp = 0.0

    def _advance_drift(self, stamp: float) -> None:
        dt = stamp - self._drift_stamp
        if dt <= 0 or (self.cfg.drift_xy == 0 and self.cfg.drift_theta == 0):
            self._drift_stamp = max(stamp, self._drift_stamp)
            return
        step = self._rng_drift.normal(size=3) * math.sqrt(dt)
        self.odom_offset = compose(Pose2(step[0] * self.cfg.drift_xy, step[1] * self.cfg.drift_xy,
                                         step[2] * self.cfg.drift_theta), self.odom_offset)
        self._drift_stamp = stamp

    def odom_pose(self, truth: BicycleState, stamp: float) -> Pose2:
        """Noise-free pose in the (possibly drifting) odom frame."""
        self._advance_drift(stamp)
        return compose(self.odom_offset, truth.pose)

    def scan_odom(self, truth: BicycleState, stamp: float) -> Measurement:
        c = self.cfg
        p = self.odom_pose(truth, stamp)
        n = self._rng_scan.normal(size=3) * np.array([c.sigma_xy, c.sigma_xy, c.sigma_theta])
        noisy = Pose2(p.x + n[0], p.y + n[1], p.theta + n[2])
        cov = np.diag([_floor_var(c.sigma_xy), _floor_var(c.sigma_xy), _floor_var(c.sigma_theta)])
        return Measurement.scan_odom(noisy, cov, stamp)

    def wheel_odom(self, truth: BicycleState, stamp: float) -> Measurement:
        c = self.cfg
        n = self._rng_wheel.normal(size=2) * np.array([c.sigma_v, c.sigma_omega])
        omega = truth.omega(self.wheelbase)
        cov = np.diag([_floor_var(c.sigma_v), _floor_var(c.sigma_omega)])
        return Measurement.wheel_odom(truth.v_actual + n[0], omega + n[1], cov, stamp)

    def imu_yaw(self, truth: BicycleState, stamp: float) -> Measurement:
        c = self.cfg
        n = self._rng_imu.normal() * c.sigma_imu
        return Measurement.imu_yaw(truth.omega(self.wheelbase) + n, _floor_var(c.sigma_imu), stamp)

    def laser(self, truth: BicycleState, grid: OccupancyGrid) -> LaserScan2:
        """Ray-cast ``n_beams`` evenly over a full turn; beams without a return are dropped.

        Ranges use the centre depth of the hit cell, the same lattice ICP matches against.
        """
        c = self.cfg
        pose = truth.pose
        angles = np.arange(c.n_beams) * (2 * math.pi / c.n_beams)
        ranges = np.array([grid.raycast((pose.x, pose.y), pose.theta + a, c.max_range, "centre") for a in angles])
        if c.sigma_range > 0:
            ranges = ranges + self._rng_laser.normal(size=ranges.size) * c.sigma_range
        hit = (ranges < c.max_range) & (ranges > 0)
        r, a = np.minimum(ranges[hit], c.max_range), angles[hit]
        return LaserScan2(np.column_stack([r * np.cos(a), r * np.sin(a)]), c.max_range)


def synthesize_sensors(history: Iterable[tuple[float, BicycleState]], cfg: SensorConfig, seed: int,
                       wheelbase: float, grid: OccupancyGrid | None = None) -> Iterator[tuple[str, float, object]]:
    """Replay a time-stamped truth history through the sensor suite.

    Yields ``(kind, stamp, reading)`` with kind one of ``scan_odom``,
    ``wheel_odom``, ``imu_yaw`` or ``laser`` (only when a grid is given).
    Each sensor fires on the first history sample at or after its next due time.
    """
    suite = SensorSuite(cfg, seed, wheelbase)
    periods = {"wheel_odom": 1.0 / cfg.wheel_rate, "imu_yaw": 1.0 / cfg.imu_rate,
               "scan_odom": 1.0 / cfg.scan_rate}
    if grid is not None:
        periods["laser"] = 1.0 / cfg.laser_rate
    due = dict.fromkeys(periods, 0.0)
    for stamp, truth in history:
        for kind, period in periods.items():
            if stamp + 1e-9 < due[kind]:
                continue
            due[kind] += period * max(1, math.floor((stamp - due[kind]) / period + 1e-9) + 1)
            if kind == "laser":
                yield kind, stamp, suite.laser(truth, grid)
            else:
                yield kind, stamp, getattr(suite, kind)(truth, stamp)
