"""Local avoidance of moving obstacles by splicing a cubic Bezier detour
into the active reference trajectory.

The detour keeps its end points on the original path and pushes the two
inner control points sideways, away from the obstacle.  Obstacle motion is
extrapolated at constant velocity; the offset is checked by dense sampling
against the predicted obstacle position at each sample's arrival time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from navstack.grid import OccupancyGrid, OutOfBoundsError
from navstack.reference import ReferenceTrajectory
from navstack.se2 import wrap_angle

BERNSTEIN_CHECK_STEP = 0.01


class AvoidanceInfeasible(RuntimeError):
    pass


@dataclass(frozen=True)
class ObstacleObservation:
    """Disc obstacle; ``center`` is its position at trajectory time ``stamp``."""

    center: tuple[float, float]
    radius: float
    velocity: tuple[float, float] = (0.0, 0.0)
    stamp: float = 0.0

    def __post_init__(self) -> None:
        if not self.radius > 0:
            raise ValueError("obstacle radius must be positive")

    def center_at(self, t) -> np.ndarray:
        """Predicted centre(s) at trajectory time(s) ``t``."""
        t = np.asarray(t, dtype=float)
        dt = (t - self.stamp)[..., None]
        return np.asarray(self.center, dtype=float) + dt * np.asarray(self.velocity, dtype=float)


@dataclass(frozen=True)
class Conflict:
    entry_index: int
    exit_index: int
    obstacle: ObstacleObservation


@dataclass(frozen=True, eq=False)
class DetourSegment:
    control_points: np.ndarray  # (4, 2)
    entry_index: int
    exit_index: int
    offset: float = 0.0
    side: int = 1

    def __post_init__(self) -> None:
        if not self.entry_index < self.exit_index:
            raise ValueError("entry_index must precede exit_index")
        object.__setattr__(self, "control_points", np.asarray(self.control_points, dtype=float).reshape(4, 2))

    @property
    def P0(self) -> np.ndarray:
        return self.control_points[0]

    @property
    def P3(self) -> np.ndarray:
        return self.control_points[3]


def bezier_point(p0, p1, p2, p3, t: float) -> np.ndarray:
    """Bernstein-form point of the cubic Bezier at ``t`` in [0, 1]."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t={t} outside [0, 1]")
    s = 1.0 - t
    return (s**3 * np.asarray(p0, float) + 3 * s * s * t * np.asarray(p1, float)
            + 3 * s * t * t * np.asarray(p2, float) + t**3 * np.asarray(p3, float))


def bezier_curve(ctrl: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Points at each parameter in ``t``; ``ctrl`` is ``(4, 2)``."""
    t = np.asarray(t, dtype=float)[:, None]
    s = 1.0 - t
    return s**3 * ctrl[0] + 3 * s * s * t * ctrl[1] + 3 * s * t * t * ctrl[2] + t**3 * ctrl[3]


def bezier_derivatives(ctrl: np.ndarray, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    t = np.asarray(t, dtype=float)[:, None]
    s = 1.0 - t
    d1 = 3 * (s * s * (ctrl[1] - ctrl[0]) + 2 * s * t * (ctrl[2] - ctrl[1]) + t * t * (ctrl[3] - ctrl[2]))
    d2 = 6 * (s * (ctrl[2] - 2 * ctrl[1] + ctrl[0]) + t * (ctrl[3] - 2 * ctrl[2] + ctrl[1]))
    return d1, d2


def detect_conflict(traj: ReferenceTrajectory, obstacles, lookahead: float, clearance: float,
                    current_index: int = 0, margin: float | None = None) -> Conflict | None:
    """First run of upcoming samples that pass within ``radius + clearance`` of an obstacle.

    Only samples within ``lookahead`` meters of arc length ahead of
    ``current_index`` are examined; obstacle positions are predicted at each
    sample's timestamp.  The run is widened by ``margin`` of arc length on
    both sides (default: ``clearance``).  A wider margin gives a longer chord
    and a gentler heading change where the detour joins the path.  A run
    that collapses to a single sample is extended by one sample so the
    detour always spans at least one step.
    """
    if lookahead <= 0 or clearance < 0:
        raise ValueError("lookahead must be positive and clearance non-negative")
    margin = clearance if margin is None else margin
    if not obstacles:
        return None
    n = len(traj)
    s = traj.arc_lengths()
    hi = int(np.searchsorted(s, s[current_index] + lookahead, side="right"))
    idx = np.arange(current_index, min(hi, n))
    if idx.size == 0:
        return None
    pts = traj.positions[idx]
    times = traj.t[idx]
    for ob in sorted(obstacles, key=lambda o: _first_hit(o, pts, times, clearance)):
        hit = np.linalg.norm(pts - ob.center_at(times), axis=1) < ob.radius + clearance
        if not hit.any():
            continue
        first = int(np.argmax(hit))
        last = first
        while last + 1 < hit.size and hit[last + 1]:
            last += 1
        i0, i1 = int(idx[first]), int(idx[last])
        # widen by the margin measured in arc length, clamped to the trajectory
        entry = max(current_index, int(np.searchsorted(s, s[i0] - margin - 1e-9, side="left")))
        exit_ = min(n - 1, int(np.searchsorted(s, s[i1] + margin + 1e-9, side="right")) - 1)
        if entry == exit_:
            exit_ = min(n - 1, exit_ + 1)
        if entry == exit_:
            return None
        return Conflict(entry, exit_, ob)
    return None


def _first_hit(ob: ObstacleObservation, pts: np.ndarray, times: np.ndarray, clearance: float) -> float:
    hit = np.linalg.norm(pts - ob.center_at(times), axis=1) < ob.radius + clearance
    return float(np.argmax(hit)) if hit.any() else math.inf


def _curve_samples(ctrl: np.ndarray, t_entry: float, v_ref: float):
    ts = np.linspace(0.0, 1.0, int(round(1.0 / BERNSTEIN_CHECK_STEP)) + 1)
    pts = bezier_curve(ctrl, ts)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    arrival = t_entry + np.concatenate([[0.0], np.cumsum(seg)]) / v_ref
    return pts, arrival


def min_clearance(ctrl: np.ndarray, ob: ObstacleObservation, t_entry: float, v_ref: float) -> float:
    """Smallest distance from the sampled curve to the predicted obstacle centre."""
    pts, arrival = _curve_samples(ctrl, t_entry, v_ref)
    return float(np.min(np.linalg.norm(pts - ob.center_at(arrival), axis=1)))


def _grid_clear(pts: np.ndarray, grid: OccupancyGrid) -> bool:
    for q in pts:
        try:
            c = grid.world_to_cell(q)
        except OutOfBoundsError:
            return False
        if grid.blocked[c.row, c.col]:
            return False
    return True


def build_detour(traj: ReferenceTrajectory, entry_index: int, exit_index: int, obstacle: ObstacleObservation,
                 clearance: float, robot_radius: float = 0.3, h_max: float | None = None,
                 v_ref: float | None = None, grid: OccupancyGrid | None = None) -> DetourSegment:
    """Bezier detour between two trajectory samples around ``obstacle``.

    The inner control points sit at one and two thirds of the chord, shifted
    along its normal by ``h = radius + clearance + robot_radius - d_chord``
    (at least 0).  If dense sampling shows the curve still too close, ``h`` is
    grown up to ``h_max`` (default ``5 (radius + clearance)``), then the other
    side is tried.  With a ``grid``, detours that leave free space are rejected.
    """
    if not 0 <= entry_index < exit_index < len(traj):
        raise ValueError("invalid entry/exit indices")
    need = obstacle.radius + clearance
    h_max = 5.0 * need if h_max is None else h_max
    v = float(traj.inputs[entry_index, 0]) if v_ref is None else v_ref
    v = v if v > 0 else 1e-3
    t_entry = float(traj.t[entry_index])
    p0 = traj.positions[entry_index].copy()
    p3 = traj.positions[exit_index].copy()
    chord = p3 - p0
    length = float(np.linalg.norm(chord))
    if length < 1e-9:
        raise AvoidanceInfeasible("entry and exit points coincide")
    u = chord / length
    normal = np.array([-u[1], u[0]])

    # obstacle position relative to the chord at its closest predicted approach
    line_pts, arrival = _curve_samples(np.array([p0, p0 + chord / 3, p0 + 2 * chord / 3, p3]), t_entry, v)
    rel = obstacle.center_at(arrival) - line_pts
    j = int(np.argmin(np.linalg.norm(rel, axis=1)))
    lateral = float(rel[j] @ normal)
    d_chord = abs(lateral)
    side = -1 if lateral > 0 else 1
    h0 = max(0.0, need + robot_radius - d_chord)

    def ctrl_for(h: float, sgn: int) -> np.ndarray:
        off = sgn * h * normal
        return np.array([p0, p0 + chord / 3 + off, p0 + 2 * chord / 3 + off, p3])

    for sgn in (side, -side):
        h = h0
        while h <= h_max + 1e-12:
            ctrl = ctrl_for(h, sgn)
            ok = min_clearance(ctrl, obstacle, t_entry, v) >= need
            if ok and grid is not None:
                ok = _grid_clear(bezier_curve(ctrl, np.linspace(0, 1, 101)), grid)
            if ok:
                return DetourSegment(ctrl, entry_index, exit_index, h, sgn)
            h = max(h * 1.25, h + 0.05)
    raise AvoidanceInfeasible(
        f"no detour within h_max={h_max:.2f} m clears obstacle of radius {obstacle.radius:.2f} m")


def _arc_length_table(ctrl: np.ndarray, n: int = 4001) -> tuple[np.ndarray, np.ndarray]:
    ts = np.linspace(0.0, 1.0, n)
    d1, _ = bezier_derivatives(ctrl, ts)
    speed = np.linalg.norm(d1, axis=1)
    s = np.concatenate([[0.0], np.cumsum(0.5 * (speed[1:] + speed[:-1]) * np.diff(ts))])
    return ts, s


def splice(traj: ReferenceTrajectory, d: DetourSegment, v_ref: float, dt: float) -> ReferenceTrajectory:
    """Replace the samples strictly between entry and exit with the resampled detour."""
    ctrl = d.control_points
    ts, s_tab = _arc_length_table(ctrl)
    total = float(s_tab[-1])
    ds = v_ref * dt
    s_new = ds * np.arange(1, int(math.ceil(total / ds - 1e-9)))
    t_new = np.interp(s_new, s_tab, ts)
    pts = bezier_curve(ctrl, t_new)
    d1, d2 = bezier_derivatives(ctrl, t_new)
    heading = np.arctan2(d1[:, 1], d1[:, 0])
    speed = np.linalg.norm(d1, axis=1)
    kappa = (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]) / np.maximum(speed, 1e-12) ** 3
    mid_poses = np.column_stack([pts, [wrap_angle(h) for h in heading]])
    mid_inputs = np.column_stack([np.full(len(pts), v_ref), v_ref * kappa])

    poses = np.vstack([traj.poses[: d.entry_index + 1], mid_poses, traj.poses[d.exit_index:]])
    inputs = np.vstack([traj.inputs[: d.entry_index + 1], mid_inputs, traj.inputs[d.exit_index:]])
    n = len(poses)
    return ReferenceTrajectory(traj.t[0] + dt * np.arange(n), poses, inputs, dt, traj.closed)
