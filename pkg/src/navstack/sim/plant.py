"""Kinematic bicycle plant with first-order actuator lag."""

from __future__ import annotations

import math
from dataclasses import dataclass

from navstack.control import AckermannCommand
from navstack.se2 import Pose2


@dataclass(frozen=True, slots=True)
class ActuatorLag:
    tau_v: float = 0.2
    tau_delta: float = 0.1


@dataclass(frozen=True, slots=True)
class BicycleState:
    pose: Pose2
    v_actual: float = 0.0
    delta_actual: float = 0.0

    def omega(self, wheelbase: float) -> float:
        return self.v_actual * math.tan(self.delta_actual) / wheelbase


def _lag(current: float, target: float, dt: float, tau: float) -> float:
    if tau <= 0 or dt >= tau:
        return target
    return current + (target - current) * dt / tau


def _deriv(theta: float, v: float, tan_d: float, wheelbase: float) -> tuple[float, float, float]:
    return v * math.cos(theta), v * math.sin(theta), v * tan_d / wheelbase


def step_bicycle(s: BicycleState, cmd: AckermannCommand, dt: float, wheelbase: float,
                 lag: ActuatorLag | None = None, delta_max: float = math.inf) -> BicycleState:
    """Advance the plant by ``dt``: actuator lag first, then one RK4 step of the kinematics."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    lag = lag or ActuatorLag(0.0, 0.0)
    v = _lag(s.v_actual, cmd.v, dt, lag.tau_v)
    delta = _lag(s.delta_actual, cmd.delta, dt, lag.tau_delta)
    delta = min(max(delta, -delta_max), delta_max)
    tan_d = math.tan(delta)

    x, y, th = s.pose.x, s.pose.y, s.pose.theta
    k1 = _deriv(th, v, tan_d, wheelbase)
    k2 = _deriv(th + 0.5 * dt * k1[2], v, tan_d, wheelbase)
    k3 = _deriv(th + 0.5 * dt * k2[2], v, tan_d, wheelbase)
    k4 = _deriv(th + dt * k3[2], v, tan_d, wheelbase)
    x += dt / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    y += dt / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    th += dt / 6.0 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
    return BicycleState(Pose2(x, y, th), v, delta)
