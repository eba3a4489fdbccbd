"""Time-indexed reference trajectories and waypoint smoothing.

A waypoint polyline is turned into a G1 curve by replacing each corner with a
circular fillet, then sampled at constant speed.  Curvature is piecewise
constant (0 on lines, +-1/r on fillets), so the reference yaw rate is exact.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from navstack.control import ControlInput
from navstack.se2 import Pose2, wrap_angle

CSV_HEADER = ("t", "x", "y", "theta", "v_ref", "omega_ref")


@dataclass
class ReferenceTrajectory:
    """Uniformly sampled ``{T_ref,k, u_ref,k}`` sequence.

    ``poses`` is ``(n, 3)`` with columns x, y, theta; ``inputs`` is ``(n, 2)``
    with columns v_ref, omega_ref.  ``closed`` marks loops whose last sample
    wraps back to the first.
    """

    t: np.ndarray
    poses: np.ndarray
    inputs: np.ndarray
    dt: float
    closed: bool = False

    def __post_init__(self) -> None:
        self.t = np.asarray(self.t, dtype=float)
        self.poses = np.asarray(self.poses, dtype=float).reshape(-1, 3)
        self.inputs = np.asarray(self.inputs, dtype=float).reshape(-1, 2)
        n = len(self.t)
        if n == 0 or self.poses.shape[0] != n or self.inputs.shape[0] != n:
            raise ValueError("trajectory arrays must be non-empty and equally long")
        if n > 1:
            steps = np.diff(self.t)
            if np.any(steps <= 0) or not np.allclose(steps, self.dt, rtol=0, atol=1e-9):
                raise ValueError("timestamps must increase uniformly by dt")
        if np.any(self.inputs[:, 0] < 0):
            raise ValueError("reference speed must be non-negative")

    def __len__(self) -> int:
        return len(self.t)

    @property
    def positions(self) -> np.ndarray:
        return self.poses[:, :2]

    def pose(self, k: int) -> Pose2:
        x, y, th = self.poses[k]
        return Pose2(x, y, th)

    def input(self, k: int) -> ControlInput:
        return ControlInput(float(self.inputs[k, 0]), float(self.inputs[k, 1]))

    def _index(self, k: int) -> tuple[int, bool]:
        n = len(self)
        if self.closed:
            return k % n, False
        if k >= n:
            return n - 1, True
        return k, False

    def window(self, k: int, horizon: int) -> list[tuple[Pose2, ControlInput]]:
        """``horizon + 1`` reference pairs from index ``k``.

        Loops wrap around; open trajectories are padded with the final pose at
        rest.
        """
        out = []
        for j in range(k, k + horizon + 1):
            idx, past_end = self._index(j)
            u = ControlInput(0.0, 0.0) if past_end else self.input(idx)
            out.append((self.pose(idx), u))
        return out

    def arc_lengths(self) -> np.ndarray:
        seg = np.linalg.norm(np.diff(self.positions, axis=0), axis=1)
        return np.concatenate([[0.0], np.cumsum(seg)])

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_HEADER)
            for t, (x, y, th), (v, om) in zip(self.t, self.poses, self.inputs):
                w.writerow([f"{val:.9g}" for val in (t, x, y, th, v, om)])

    @classmethod
    def from_csv(cls, path: str | Path, closed: bool = False) -> ReferenceTrajectory:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or tuple(rows[0]) != CSV_HEADER:
            raise ValueError(f"{path}: bad trajectory header")
        data = np.array([[float(v) for v in r] for r in rows[1:]])
        dt = float(data[1, 0] - data[0, 0]) if len(data) > 1 else 1.0
        # re-derive exact uniform timestamps lost to 9-digit formatting
        t = data[0, 0] + dt * np.arange(len(data))
        return cls(t, data[:, 1:4], data[:, 4:6], dt, closed)


# geometric primitives: ("line", start, heading, length) / ("arc", start, heading, radius, sweep)
def _fillet_primitives(points: np.ndarray, corner_radius: float, closed: bool) -> list[tuple]:
    pts = np.asarray(points, dtype=float)
    if closed and np.allclose(pts[0], pts[-1]):
        pts = pts[:-1]
    # drop repeated points
    keep = [0] + [i for i in range(1, len(pts)) if np.linalg.norm(pts[i] - pts[i - 1]) > 1e-12]
    pts = pts[keep]
    if closed and len(pts) > 1 and np.linalg.norm(pts[-1] - pts[0]) <= 1e-12:
        pts = pts[:-1]
    n = len(pts)
    if n < 2:
        raise ValueError("path has zero length")

    if closed:
        segs = [(pts[i], pts[(i + 1) % n]) for i in range(n)]
        corners = list(range(n))  # corner i sits at the start of segment i
    else:
        segs = [(pts[i], pts[i + 1]) for i in range(n - 1)]
        corners = list(range(1, n - 1))
    seg_len = [float(np.linalg.norm(b - a)) for a, b in segs]
    seg_dir = [(b - a) / ln for (a, b), ln in zip(segs, seg_len)]
    nseg = len(segs)

    # tangent length trimmed from each end of each segment
    trim_start = [0.0] * nseg
    trim_end = [0.0] * nseg
    arcs: dict[int, tuple[float, float]] = {}  # segment index -> (radius, signed sweep) entering it
    for c in corners:
        s_in = (c - 1) % nseg
        s_out = c % nseg
        d1, d2 = seg_dir[s_in], seg_dir[s_out]
        turn = math.atan2(d1[0] * d2[1] - d1[1] * d2[0], float(d1 @ d2))
        if abs(turn) < 1e-12:
            continue
        half_tan = math.tan(0.5 * abs(turn))
        tangent = min(corner_radius * half_tan, 0.5 * seg_len[s_in], 0.5 * seg_len[s_out])
        if tangent <= 0.0:
            continue
        trim_end[s_in] = tangent
        trim_start[s_out] = tangent
        arcs[s_out] = (tangent / half_tan, turn)

    prims: list[tuple] = []
    for i in range(nseg):
        a, _ = segs[i]
        d = seg_dir[i]
        heading = math.atan2(d[1], d[0])
        if i in arcs and (i > 0 or closed):
            radius, turn = arcs[i]
            prev_d = seg_dir[(i - 1) % nseg]
            tangent = trim_start[i]
            start = a - prev_d * tangent
            prims.append(("arc", start, math.atan2(prev_d[1], prev_d[0]), radius, turn))
        length = seg_len[i] - trim_start[i] - trim_end[i]
        if length > 1e-12:
            prims.append(("line", a + d * trim_start[i], heading, length))
    if closed and prims and prims[0][0] == "arc":
        # begin the loop on a straight piece
        prims = prims[1:] + prims[:1]
    return prims


def _prim_length(p: tuple) -> float:
    return p[3] if p[0] == "line" else p[3] * abs(p[4])


def _prim_eval(p: tuple, s: float) -> tuple[float, float, float, float]:
    """Position, heading and signed curvature at arc length ``s`` into primitive ``p``."""
    if p[0] == "line":
        _, start, heading, _ = p
        return (start[0] + s * math.cos(heading), start[1] + s * math.sin(heading), heading, 0.0)
    _, start, heading, radius, turn = p
    sign = 1.0 if turn > 0 else -1.0
    phi = sign * s / radius
    # centre lies to the left (sign +) or right of the start heading
    cx = start[0] - sign * radius * math.sin(heading)
    cy = start[1] + sign * radius * math.cos(heading)
    h = heading + phi
    return (cx + sign * radius * math.sin(h), cy - sign * radius * math.cos(h), h, sign / radius)


def smoothed_length(points, corner_radius: float, closed: bool = False) -> float:
    return float(sum(_prim_length(p) for p in _fillet_primitives(np.asarray(points), corner_radius, closed)))


def generate_reference(path, v_ref: float, dt: float, corner_radius: float = 0.5,
                       closed: bool = False) -> ReferenceTrajectory:
    """Fillet the corners of a waypoint path and sample it at constant speed.

    ``path`` is a ``PlannedPath`` or an ``(n, 2)`` array of waypoints in
    meters.  Samples are spaced ``v_ref * dt`` apart in arc length; the final
    partial step of an open path is dropped so spacing stays uniform.
    """
    if v_ref <= 0 or dt <= 0:
        raise ValueError("v_ref and dt must be positive")
    pts = np.asarray(getattr(path, "world_points", path), dtype=float).reshape(-1, 2)
    if len(pts) < 2:
        raise ValueError("need at least two waypoints")
    prims = _fillet_primitives(pts, corner_radius, closed)
    lengths = np.array([_prim_length(p) for p in prims])
    total = float(lengths.sum())
    if total <= 1e-12:
        raise ValueError("path has zero length")
    ds = v_ref * dt
    if closed:
        count = int(math.ceil(total / ds - 1e-9))
    else:
        count = int(math.floor(total / ds + 1e-9)) + 1
    starts = np.concatenate([[0.0], np.cumsum(lengths)])
    poses = np.empty((count, 3))
    inputs = np.empty((count, 2))
    for k in range(count):
        s = min(k * ds, total)
        j = min(int(np.searchsorted(starts, s, side="right")) - 1, len(prims) - 1)
        x, y, h, kappa = _prim_eval(prims[j], s - starts[j])
        poses[k] = (x, y, wrap_angle(h))
        inputs[k] = (v_ref, v_ref * kappa)
    return ReferenceTrajectory(dt * np.arange(count), poses, inputs, dt, closed)

