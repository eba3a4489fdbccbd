"""Trajectory-tracking controllers for a car-like robot.

Two MPC formulations share the condensed box-QP machinery:

* ``solve_agmpc`` -- geometric error on SE(2) with an input-increment
  augmented state, so actuation changes are penalized directly.
* ``solve_baseline_mpc`` -- world-frame Euclidean error linearized about the
  reference with the kinematic bicycle model; penalizes the input deviation
  only.

Both are condensed over the input deviations ``u~_k = u_k - u_ref,k``.  In that
parameterization the actuator limits ``0 <= v <= v_max`` and
``|omega| <= omega_max`` are plain boxes, and input increments are a fixed
linear map of the decision vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from navstack.qp import QpProblem, qp_solve
from navstack.se2 import Pose2, Twist2, wrap_angle

B_CONT = np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]])


class ConfigError(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class ControlInput:
    v: float
    omega: float

    def as_array(self) -> np.ndarray:
        return np.array([self.v, self.omega])


@dataclass(frozen=True, slots=True)
class AckermannCommand:
    v: float
    delta: float


@dataclass(frozen=True)
class ControllerConfig:
    """Horizon, weights and actuator limits shared by both controllers."""

    horizon: int = 20
    dt: float = 1.0 / 30.0
    # cross-track error weighted above along-track error; see README
    q_x: float = 2.0
    q_y: float = 30.0
    q_psi: float = 4.0
    r_v: float = 1.0
    r_w: float = 1.0
    rd_v: float = 1.0
    rd_w: float = 1.0
    v_max: float = 2.0
    omega_max: float = 2.5
    delta_max: float = 0.7
    wheelbase: float = 0.5
    v_eps: float = 0.05

    def __post_init__(self) -> None:
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise ConfigError(f"horizon must be a positive integer, got {self.horizon}")
        object.__setattr__(self, "horizon", int(self.horizon))
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        for name in ("q_x", "q_y", "q_psi", "r_v", "r_w", "rd_v", "rd_w"):
            if getattr(self, name) < 0:
                raise ConfigError(f"weight {name} must be non-negative")
        for name in ("v_max", "omega_max", "delta_max", "wheelbase", "v_eps"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")

    @property
    def Q(self) -> np.ndarray:
        return np.diag([self.q_x, self.q_y, self.q_psi])

    @property
    def R(self) -> np.ndarray:
        return np.diag([self.r_v, self.r_w])

    @property
    def R_delta(self) -> np.ndarray:
        return np.diag([self.rd_v, self.rd_w])

    def with_(self, **changes) -> ControllerConfig:
        return replace(self, **changes)

    @classmethod
    def from_file(cls, path: str | Path) -> ControllerConfig:
        """Read a flat ``key = value`` file; unknown keys are an error."""
        known = {f.name: f.type for f in fields(cls)}
        values: dict[str, float] = {}
        for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in known:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            try:
                values[key] = int(val) if key == "horizon" else float(val)
            except ValueError:
                raise ConfigError(f"{path}:{lineno}: bad value for {key}: {val!r}") from None
        return cls(**values)

    def to_file(self, path: str | Path) -> None:
        lines = [f"{f.name} = {getattr(self, f.name)!r}" for f in fields(self)]
        Path(path).write_text("\n".join(lines) + "\n")


@dataclass(slots=True)
class ControllerState:
    """Previous input deviation carried between A-GMPC solves."""

    u_tilde_prev: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def reset(self) -> None:
        self.u_tilde_prev = np.zeros(2)


@dataclass
class MpcSolution:
    u0: ControlInput
    cost: float
    u_tilde: np.ndarray  # (N, 2) optimal deviations
    predicted: np.ndarray  # (N + 1, 3) predicted error states, row 0 is the initial error
    delta_u: np.ndarray | None = None  # (N, 2), A-GMPC only
    state: ControllerState | None = None


def _as_input(u) -> np.ndarray:
    if isinstance(u, ControlInput):
        return u.as_array()
    return np.asarray(u, dtype=float).reshape(2)


def error_matrices(u_ref_k, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Euler-discretized geometric error dynamics about the reference input."""
    v_ref, w_ref = _as_input(u_ref_k)
    a_c = np.array([[0.0, w_ref, 0.0], [-w_ref, 0.0, v_ref], [0.0, 0.0, 0.0]])
    return np.eye(3) + a_c * dt, B_CONT * dt


def build_augmented(a_d: np.ndarray, b_d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Prediction model for the stacked state ``[xi_k, u~_{k-1}]``."""
    a_bar = np.block([[a_d, b_d], [np.zeros((2, 3)), np.eye(2)]])
    b_bar = np.vstack([b_d, np.eye(2)])
    return a_bar, b_bar


def _condense(a_seq: Sequence[np.ndarray], b_seq: Sequence[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Stack ``x_{k}`` for k = 1..N as ``S_x x_0 + S_u U`` for time-varying (A_k, B_k)."""
    n = len(a_seq)
    nx, nu = b_seq[0].shape
    s_x = np.zeros((n * nx, nx))
    s_u = np.zeros((n * nx, n * nu))
    phi = np.eye(nx)
    for k in range(n):
        rows = slice(k * nx, (k + 1) * nx)
        phi = a_seq[k] @ phi
        s_x[rows] = phi
        if k > 0:
            s_u[rows, : k * nu] = a_seq[k] @ s_u[(k - 1) * nx : k * nx, : k * nu]
        s_u[rows, k * nu : (k + 1) * nu] = b_seq[k]
    return s_x, s_u


def _input_bounds(u_ref: np.ndarray, cfg: ControllerConfig) -> tuple[np.ndarray, np.ndarray]:
    lo_abs = np.array([0.0, -cfg.omega_max])
    hi_abs = np.array([cfg.v_max, cfg.omega_max])
    return (lo_abs - u_ref).ravel(), (hi_abs - u_ref).ravel()


def _clamp_input(u: np.ndarray, cfg: ControllerConfig) -> np.ndarray:
    return np.array([min(max(u[0], 0.0), cfg.v_max), min(max(u[1], -cfg.omega_max), cfg.omega_max)])


def _check_window(ref_window, cfg: ControllerConfig) -> None:
    if cfg.v_max <= 0:
        raise ConfigError("infeasible bounds: v_max must be positive")
    if len(ref_window) < cfg.horizon:
        raise ValueError(f"reference window has {len(ref_window)} samples, horizon needs {cfg.horizon}")


def agmpc_qp(xi_0, u_tilde_prev, ref_window, cfg: ControllerConfig):
    """Build the condensed A-GMPC QP.

    Returns ``(problem, s_x, s_u, const)`` where the full cost equals
    ``problem.objective(U) + const`` for the stacked deviation vector ``U``.
    """
    n = cfg.horizon
    u_ref = np.array([_as_input(u) for u in ref_window[:n]])
    xi0 = xi_0.as_array() if isinstance(xi_0, Twist2) else np.asarray(xi_0, dtype=float)
    up = np.asarray(u_tilde_prev, dtype=float).reshape(2)

    mats = [error_matrices(u, cfg.dt) for u in u_ref]
    s_x, s_u = _condense([m[0] for m in mats], [m[1] for m in mats])
    q_bar = np.kron(np.eye(n), cfg.Q)
    r_bar = np.kron(np.eye(n), cfg.R)
    rd_bar = np.kron(np.eye(n), cfg.R_delta)
    # increments: Delta U = D U - E u~_{-1}
    diff = np.eye(2 * n) - np.eye(2 * n, k=-2)
    e_first = np.zeros((2 * n, 2))
    e_first[:2] = np.eye(2)

    free = s_x @ xi0
    hess = 2.0 * (s_u.T @ q_bar @ s_u + r_bar + diff.T @ rd_bar @ diff)
    grad = 2.0 * (s_u.T @ q_bar @ free - diff.T @ rd_bar @ (e_first @ up))
    const = float(xi0 @ cfg.Q @ xi0 + free @ q_bar @ free + up @ cfg.R_delta @ up)
    lo, hi = _input_bounds(u_ref, cfg)
    return QpProblem(hess, grad, lo, hi), s_x, s_u, const


def solve_agmpc(xi_0: Twist2, ctrl_state: ControllerState, ref_window, cfg: ControllerConfig,
                tol: float = 1e-8, max_iter: int = 5000, warm_start: np.ndarray | None = None) -> MpcSolution:
    """One receding-horizon step of the geometric MPC.

    ``ref_window`` holds at least ``cfg.horizon`` reference inputs starting at
    the current time index.  ``ctrl_state`` is not mutated; the updated state is
    returned on the solution.
    """
    _check_window(ref_window, cfg)
    n = cfg.horizon
    problem, s_x, s_u, const = agmpc_qp(xi_0, ctrl_state.u_tilde_prev, ref_window, cfg)
    z = qp_solve(problem, tol=tol, max_iter=max_iter, z0=warm_start)
    u_tilde = z.reshape(n, 2)
    xi0 = xi_0.as_array() if isinstance(xi_0, Twist2) else np.asarray(xi_0, dtype=float)
    predicted = np.vstack([xi0, (s_x @ xi0 + s_u @ z).reshape(n, 3)])
    delta_u = np.diff(np.vstack([ctrl_state.u_tilde_prev, u_tilde]), axis=0)

    u_ref0 = _as_input(ref_window[0])
    u0 = _clamp_input(u_ref0 + u_tilde[0], cfg)
    return MpcSolution(
        u0=ControlInput(float(u0[0]), float(u0[1])),
        cost=problem.objective(z) + const,
        u_tilde=u_tilde,
        predicted=predicted,
        delta_u=delta_u,
        state=ControllerState(u0 - u_ref0),
    )


def _ref_pair(item) -> tuple[Pose2, np.ndarray]:
    pose, u = item[0], item[1]
    return pose, _as_input(u)


def euclidean_error(pose: Pose2, ref: Pose2) -> np.ndarray:
    return np.array([pose.x - ref.x, pose.y - ref.y, wrap_angle(pose.theta - ref.theta)])


def bicycle_error_matrices(ref: Pose2, u_ref, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """World-frame error Jacobians of the kinematic bicycle about the reference.

    The steering input enters as the yaw rate ``omega = v tan(delta) / L``,
    which maps one-to-one onto ``delta`` at fixed speed.
    """
    v_ref, _ = _as_input(u_ref)
    c, s = math.cos(ref.theta), math.sin(ref.theta)
    a_d = np.eye(3)
    a_d[0, 2] = -v_ref * s * dt
    a_d[1, 2] = v_ref * c * dt
    b_d = np.array([[c, 0.0], [s, 0.0], [0.0, 1.0]]) * dt
    return a_d, b_d


def baseline_qp(pose: Pose2, ref_window, cfg: ControllerConfig):
    n = cfg.horizon
    pairs = [_ref_pair(item) for item in ref_window[:n]]
    u_ref = np.array([u for _, u in pairs])
    e0 = euclidean_error(pose, pairs[0][0])
    mats = [bicycle_error_matrices(p, u, cfg.dt) for p, u in pairs]
    s_x, s_u = _condense([m[0] for m in mats], [m[1] for m in mats])
    q_bar = np.kron(np.eye(n), cfg.Q)
    r_bar = np.kron(np.eye(n), cfg.R)
    free = s_x @ e0
    hess = 2.0 * (s_u.T @ q_bar @ s_u + r_bar)
    grad = 2.0 * (s_u.T @ q_bar @ free)
    const = float(e0 @ cfg.Q @ e0 + free @ q_bar @ free)
    lo, hi = _input_bounds(u_ref, cfg)
    return QpProblem(hess, grad, lo, hi), s_x, s_u, const, e0


def solve_baseline_mpc(pose: Pose2, ref_window, cfg: ControllerConfig, tol: float = 1e-8,
                       max_iter: int = 5000, warm_start: np.ndarray | None = None) -> MpcSolution:
    """Linearized Euclidean error-state MPC; ``ref_window`` holds ``(T_ref, u_ref)`` pairs."""
    _check_window(ref_window, cfg)
    n = cfg.horizon
    problem, s_x, s_u, const, e0 = baseline_qp(pose, ref_window, cfg)
    z = qp_solve(problem, tol=tol, max_iter=max_iter, z0=warm_start)
    u_tilde = z.reshape(n, 2)
    predicted = np.vstack([e0, (s_x @ e0 + s_u @ z).reshape(n, 3)])
    u_ref0 = _ref_pair(ref_window[0])[1]
    u0 = _clamp_input(u_ref0 + u_tilde[0], cfg)
    return MpcSolution(
        u0=ControlInput(float(u0[0]), float(u0[1])),
        cost=problem.objective(z) + const,
        u_tilde=u_tilde,
        predicted=predicted,
    )


def to_ackermann(u: ControlInput, wheelbase: float, v_eps: float = 0.05,
                 delta_max: float = math.inf) -> AckermannCommand:
    """Convert a unicycle command to front-wheel steering.

    The speed in the denominator is floored at ``v_eps`` so the conversion stays
    finite at standstill.
    """
    if wheelbase <= 0:
        raise ValueError("wheelbase must be positive")
    delta = math.atan(u.omega * wheelbase / max(u.v, v_eps))
    delta = min(max(delta, -delta_max), delta_max)
    return AckermannCommand(u.v, delta)
