"""Planar rigid-body poses and the SE(2) exponential / logarithm maps.

Poses are stored compactly as ``(x, y, theta)``; 3x3 homogeneous matrices are
only built when a caller asks for one.  Headings are always wrapped into the
half-open interval ``(-pi, pi]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SMALL_ANGLE = 1e-6


def wrap_angle(theta: float) -> float:
    """Wrap ``theta`` into ``(-pi, pi]``."""
    if -math.pi < theta <= math.pi:
        return float(theta)
    wrapped = theta - 2.0 * math.pi * math.ceil((theta - math.pi) / (2.0 * math.pi))
    # ceil can land one period off when theta - pi is an exact float multiple
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    elif wrapped > math.pi:
        wrapped -= 2.0 * math.pi
    return float(wrapped)


@dataclass(frozen=True, slots=True)
class Pose2:
    """Pose in the plane: position in meters, heading in radians."""

    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.theta)):
            raise ValueError(f"non-finite pose {self.x, self.y, self.theta}")
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    @classmethod
    def identity(cls) -> Pose2:
        return cls(0.0, 0.0, 0.0)

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> Pose2:
        return cls(m[0, 2], m[1, 2], math.atan2(m[1, 0], m[0, 0]))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta])

    def as_matrix(self) -> np.ndarray:
        c, s = math.cos(self.theta), math.sin(self.theta)
        return np.array([[c, -s, self.x], [s, c, self.y], [0.0, 0.0, 1.0]])

    def transform_points(self, pts: np.ndarray) -> np.ndarray:
        """Map an ``(n, 2)`` array of points from this pose's frame to the parent frame."""
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        c, s = math.cos(self.theta), math.sin(self.theta)
        rot = np.array([[c, -s], [s, c]])
        return pts @ rot.T + np.array([self.x, self.y])

    def __matmul__(self, other: Pose2) -> Pose2:
        return compose(self, other)


@dataclass(frozen=True, slots=True)
class Twist2:
    """Lie-algebra coordinates ``[e_x, e_y, e_psi]`` of an SE(2) element."""

    e_x: float = 0.0
    e_y: float = 0.0
    e_psi: float = 0.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.e_x) and math.isfinite(self.e_y) and math.isfinite(self.e_psi)):
            raise ValueError(f"non-finite twist {self.e_x, self.e_y, self.e_psi}")

    @classmethod
    def from_array(cls, a) -> Twist2:
        return cls(float(a[0]), float(a[1]), float(a[2]))

    def as_array(self) -> np.ndarray:
        return np.array([self.e_x, self.e_y, self.e_psi])


def compose(a: Pose2, b: Pose2) -> Pose2:
    """Group product ``a * b``."""
    c, s = math.cos(a.theta), math.sin(a.theta)
    return Pose2(a.x + c * b.x - s * b.y, a.y + s * b.x + c * b.y, a.theta + b.theta)


def inverse(a: Pose2) -> Pose2:
    c, s = math.cos(a.theta), math.sin(a.theta)
    return Pose2(-c * a.x - s * a.y, s * a.x - c * a.y, -a.theta)


def between(a: Pose2, b: Pose2) -> Pose2:
    """Relative pose ``a^-1 * b``."""
    return compose(inverse(a), b)


def _exp_coeffs(theta: float) -> tuple[float, float]:
    # sin(t)/t and (1 - cos(t))/t
    if abs(theta) < SMALL_ANGLE:
        t2 = theta * theta
        return 1.0 - t2 / 6.0, theta / 2.0 - theta * t2 / 24.0
    return math.sin(theta) / theta, (1.0 - math.cos(theta)) / theta


def exp_se2(xi: Twist2) -> Pose2:
    a, b = _exp_coeffs(xi.e_psi)
    return Pose2(a * xi.e_x - b * xi.e_y, b * xi.e_x + a * xi.e_y, xi.e_psi)


def log_se2(e: Pose2) -> Twist2:
    """SE(2) logarithm, with the left-Jacobian inverse applied to the translation."""
    theta = e.theta
    half = 0.5 * theta
    if abs(theta) < SMALL_ANGLE:
        diag = 1.0 - theta * theta / 12.0
    else:
        diag = half * math.cos(half) / math.sin(half)
    return Twist2(diag * e.x + half * e.y, -half * e.x + diag * e.y, theta)


def tracking_error(t_ref: Pose2, t: Pose2) -> Twist2:
    """Geometric error ``Log(T_ref^-1 T)``, expressed in the reference frame."""
    return log_se2(between(t_ref, t))


def interpolate(a: Pose2, b: Pose2, alpha: float) -> Pose2:
    """Geodesic interpolation ``a * Exp(alpha * Log(a^-1 b))``."""
    xi = log_se2(between(a, b)).as_array() * alpha
    return compose(a, exp_se2(Twist2.from_array(xi)))
