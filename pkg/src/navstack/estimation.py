"""Two-layer pose estimation.

The local layer is an EKF over ``[x, y, theta, v, omega]`` in the odom frame
L, fusing low-rate scan odometry with high-rate wheel and gyro readings.  The
map layer registers laser scans against the occupancy grid (point-to-point
ICP) and low-pass filters the resulting odom-to-map transform.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from navstack.grid import OccupancyGrid
from navstack.se2 import Pose2, compose, interpolate, inverse, wrap_angle

STATE_DIM = 5
X, Y, TH, V, W = range(STATE_DIM)


class StaleMeasurement(Exception):
    """A measurement older than the filter state; it is skipped, not fused."""


class DegenerateMatch(RuntimeError):
    pass


class MeasurementKind(enum.Enum):
    SCAN_ODOM = "scan_odom"
    WHEEL_ODOM = "wheel_odom"
    IMU_YAW = "imu_yaw"


_OBSERVED = {
    MeasurementKind.SCAN_ODOM: [X, Y, TH],
    MeasurementKind.WHEEL_ODOM: [V, W],
    MeasurementKind.IMU_YAW: [W],
}


@dataclass(frozen=True, eq=False)
class Measurement:
    kind: MeasurementKind
    value: np.ndarray
    noise: np.ndarray
    stamp: float

    def __post_init__(self) -> None:
        dim = len(_OBSERVED[self.kind])
        value = np.asarray(self.value, dtype=float).reshape(dim)
        noise = np.atleast_2d(np.asarray(self.noise, dtype=float))
        if noise.shape != (dim, dim):
            raise ValueError(f"{self.kind.value} noise must be {dim}x{dim}")
        if not math.isfinite(self.stamp):
            raise ValueError("measurement stamp must be finite")
        object.__setattr__(self, "value", value)
        object.__setattr__(self, "noise", noise)

    @classmethod
    def scan_odom(cls, pose: Pose2, noise, stamp: float) -> Measurement:
        return cls(MeasurementKind.SCAN_ODOM, pose.as_array(), noise, stamp)

    @classmethod
    def wheel_odom(cls, v: float, omega: float, noise, stamp: float) -> Measurement:
        return cls(MeasurementKind.WHEEL_ODOM, [v, omega], noise, stamp)

    @classmethod
    def imu_yaw(cls, omega: float, noise, stamp: float) -> Measurement:
        return cls(MeasurementKind.IMU_YAW, [omega], np.atleast_2d(noise), stamp)


@dataclass(frozen=True, eq=False)
class EkfState:
    pose: Pose2
    v: float
    omega: float
    covariance: np.ndarray
    stamp: float = 0.0

    def __post_init__(self) -> None:
        cov = np.asarray(self.covariance, dtype=float)
        if cov.shape != (STATE_DIM, STATE_DIM):
            raise ValueError("covariance must be 5x5")
        object.__setattr__(self, "covariance", cov)

    @classmethod
    def initial(cls, pose: Pose2, sigma=(0.05, 0.05, 0.02, 0.1, 0.1), stamp: float = 0.0) -> EkfState:
        return cls(pose, 0.0, 0.0, np.diag(np.square(sigma)), stamp)

    def as_vector(self) -> np.ndarray:
        return np.array([self.pose.x, self.pose.y, self.pose.theta, self.v, self.omega])

    @classmethod
    def from_vector(cls, x: np.ndarray, cov: np.ndarray, stamp: float) -> EkfState:
        return cls(Pose2(x[X], x[Y], x[TH]), float(x[V]), float(x[W]), cov, stamp)


def _check_psd(m: np.ndarray, what: str) -> None:
    if not np.allclose(m, m.T, atol=1e-10) or np.linalg.eigvalsh(0.5 * (m + m.T))[0] < -1e-10:
        raise ValueError(f"{what} is not symmetric positive semi-definite")


def default_process_noise() -> np.ndarray:
    return np.diag([1e-4, 1e-4, 1e-4, 0.5, 0.5])


def ekf_predict(s: EkfState, dt: float, q_process: np.ndarray | None = None) -> EkfState:
    """Propagate with the unicycle model holding ``v`` and ``omega`` constant."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    q = default_process_noise() if q_process is None else np.asarray(q_process, dtype=float)
    x = s.as_vector()
    c, sn = math.cos(x[TH]), math.sin(x[TH])
    x_new = x.copy()
    x_new[X] += x[V] * c * dt
    x_new[Y] += x[V] * sn * dt
    x_new[TH] = wrap_angle(x[TH] + x[W] * dt)
    f = np.eye(STATE_DIM)
    f[X, TH] = -x[V] * sn * dt
    f[X, V] = c * dt
    f[Y, TH] = x[V] * c * dt
    f[Y, V] = sn * dt
    f[TH, W] = dt
    p = f @ s.covariance @ f.T + q * dt
    return EkfState.from_vector(x_new, 0.5 * (p + p.T), s.stamp + dt)


def ekf_update(s: EkfState, m: Measurement) -> EkfState:
    """Fuse one measurement with a Joseph-form covariance update.

    Raises ``StaleMeasurement`` if ``m`` predates the state.
    """
    if m.stamp < s.stamp:
        raise StaleMeasurement(f"measurement at {m.stamp} older than state at {s.stamp}")
    _check_psd(m.noise, "measurement noise")
    idx = _OBSERVED[m.kind]
    x = s.as_vector()
    h = np.zeros((len(idx), STATE_DIM))
    h[np.arange(len(idx)), idx] = 1.0
    innov = m.value - x[idx]
    if m.kind is MeasurementKind.SCAN_ODOM:
        innov[2] = wrap_angle(innov[2])
    p = s.covariance
    s_mat = h @ p @ h.T + m.noise
    gain = p @ h.T @ np.linalg.pinv(s_mat, hermitian=True)
    x_new = x + gain @ innov
    x_new[TH] = wrap_angle(x_new[TH])
    i_kh = np.eye(STATE_DIM) - gain @ h
    p_new = i_kh @ p @ i_kh.T + gain @ m.noise @ gain.T
    return EkfState.from_vector(x_new, 0.5 * (p_new + p_new.T), m.stamp)


@dataclass
class LocalEstimator:
    """Owns the EKF state and applies time-ordered predicts and updates."""

    state: EkfState
    q_process: np.ndarray = field(default_factory=default_process_noise)
    skipped: int = 0

    def advance_to(self, stamp: float) -> None:
        dt = stamp - self.state.stamp
        if dt > 1e-12:
            self.state = ekf_predict(self.state, dt, self.q_process)

    def fuse(self, m: Measurement) -> bool:
        self.advance_to(m.stamp)
        try:
            self.state = ekf_update(self.state, m)
        except StaleMeasurement:
            self.skipped += 1
            return False
        return True


@dataclass(frozen=True, eq=False)
class LaserScan2:
    points: np.ndarray
    max_range: float

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=float).reshape(-1, 2)
        if np.any(np.linalg.norm(pts, axis=1) > self.max_range + 1e-9):
            raise ValueError("scan point beyond max_range")
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class IcpConfig:
    max_iter: int = 50
    tol: float = 1e-4
    max_corr_dist: float = 1.0


@dataclass(frozen=True, eq=False)
class MapCorrection:
    """Odom-to-map transform ``T_ML`` with the scan fit quality that produced it.

    ``pose`` is the registered body pose in the map frame, ``residuals`` the
    RMS correspondence distance before each ICP iteration and at the end
    (the quantity each alignment step minimises).
    """

    T_ML: Pose2
    stamp: float
    fitness: float
    pose: Pose2 | None = None
    residuals: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if self.fitness < 0:
            raise ValueError("fitness must be non-negative")


def _align(src: np.ndarray, dst: np.ndarray) -> Pose2:
    """Closed-form rigid transform taking ``src`` onto ``dst`` (least squares)."""
    mu_s, mu_d = src.mean(axis=0), dst.mean(axis=0)
    a, b = src - mu_s, dst - mu_d
    sxx = float(np.sum(a[:, 0] * b[:, 0] + a[:, 1] * b[:, 1]))
    sxy = float(np.sum(a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]))
    ang = math.atan2(sxy, sxx)
    c, s = math.cos(ang), math.sin(ang)
    t = mu_d - np.array([c * mu_s[0] - s * mu_s[1], s * mu_s[0] + c * mu_s[1]])
    return Pose2(t[0], t[1], ang)


def icp_scan_to_map(scan: LaserScan2, grid: OccupancyGrid, init: Pose2, cfg: IcpConfig | None = None,
                    local: Pose2 | None = None, stamp: float = 0.0) -> MapCorrection:
    """Register ``scan`` (body frame) against the grid's Occupied cell centres.

    ``init`` is the starting guess of the body pose in the map frame.  The
    returned correction carries the matched pose and ``T_ML = pose * local^-1``
    (with ``local`` defaulting to the identity).
    """
    cfg = cfg or IcpConfig()
    if len(scan) == 0:
        raise DegenerateMatch("empty scan")
    targets = grid.occupied_centers
    if len(targets) == 0:
        raise DegenerateMatch("grid has no occupied cells")
    tree = grid.occupied_tree
    pose = init
    residuals: list[float] = []
    fitness = math.inf
    for _ in range(cfg.max_iter):
        world = pose.transform_points(scan.points)
        dist, nn = tree.query(world, distance_upper_bound=cfg.max_corr_dist)
        ok = np.isfinite(dist)
        if ok.sum() < 3:
            raise DegenerateMatch(f"only {int(ok.sum())} correspondences within {cfg.max_corr_dist} m")
        residuals.append(float(np.sqrt(np.mean(dist[ok] ** 2))))
        step = _align(world[ok], targets[nn[ok]])
        pose = compose(step, pose)
        if math.hypot(step.x, step.y) < cfg.tol and abs(step.theta) < cfg.tol:
            break
    world = pose.transform_points(scan.points)
    dist, _ = tree.query(world, distance_upper_bound=cfg.max_corr_dist)
    ok = np.isfinite(dist)
    if ok.sum() < 3:
        raise DegenerateMatch("alignment diverged")
    fitness = float(dist[ok].mean())
    residuals.append(float(np.sqrt(np.mean(dist[ok] ** 2))))
    t_ml = compose(pose, inverse(local)) if local is not None else pose
    return MapCorrection(t_ml, stamp, fitness, pose, tuple(residuals))


def compose_map_pose(corr: MapCorrection, local: EkfState) -> Pose2:
    return compose(corr.T_ML, local.pose)


def correction_filter(prev: MapCorrection, new_raw: MapCorrection, alpha: float = 0.25,
                      fitness_gate: float = 0.3) -> MapCorrection:
    """Geodesic low-pass of the odom-to-map transform; poor fits are ignored."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    if new_raw.fitness > fitness_gate:
        return prev
    if alpha == 1.0:
        return new_raw
    t_ml = interpolate(prev.T_ML, new_raw.T_ML, alpha)
    return replace(new_raw, T_ML=t_ml)


ESTIMATION_LOG_FIELDS = ("t", "x_est", "y_est", "theta_est", "v_est", "omega_est",
                         "x_true", "y_true", "theta_true")


def write_estimation_log(rows, path) -> None:
    """Write ``(t, est pose, v, omega, true pose)`` rows as CSV for offline analysis."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ESTIMATION_LOG_FIELDS)
        for r in rows:
            if len(r) != len(ESTIMATION_LOG_FIELDS):
                raise ValueError(f"expected {len(ESTIMATION_LOG_FIELDS)} values per row")
            w.writerow([format(float(v), ".9g") for v in r])
