"""Benchmark reference curves: Bernoulli lemniscate and rounded square."""

from __future__ import annotations

import math

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid

from navstack.reference import ReferenceTrajectory, generate_reference
from navstack.se2 import wrap_angle


def lemniscate_point(a: float, u):
    d = 1.0 + np.sin(u) ** 2
    return a * np.cos(u) / d, a * np.sin(u) * np.cos(u) / d


def _lemniscate_d1(a: float, u):
    s, c = np.sin(u), np.cos(u)
    d = 1.0 + s * s
    dx = -a * s * (3.0 - s * s) / d**2
    dy = a * (np.cos(2 * u) * d - 2.0 * s * s * c * c) / d**2
    return dx, dy


def _lemniscate_d2(a: float, u, h: float = 1e-5):
    xp, yp = _lemniscate_d1(a, u + h)
    xm, ym = _lemniscate_d1(a, u - h)
    return (xp - xm) / (2 * h), (yp - ym) / (2 * h)


def lemniscate_length(a: float, n: int = 200_001) -> float:
    u = np.linspace(0.0, 2 * math.pi, n)
    dx, dy = _lemniscate_d1(a, u)
    return float(trapezoid(np.hypot(dx, dy), u))


def lemniscate_ref(a: float = 4.0, v_ref: float = 1.0, dt: float = 1.0 / 30.0,
                   resolution: int = 200_001) -> ReferenceTrajectory:
    """Constant-speed figure eight starting at ``(a, 0)``, one full lap."""
    if a <= 0:
        raise ValueError("lemniscate size must be positive")
    u_dense = np.linspace(0.0, 2 * math.pi, resolution)
    dx, dy = _lemniscate_d1(a, u_dense)
    s_dense = cumulative_trapezoid(np.hypot(dx, dy), u_dense, initial=0.0)
    total = s_dense[-1]
    ds = v_ref * dt
    count = int(math.ceil(total / ds - 1e-9))
    s = ds * np.arange(count)
    # invert s(u) by interpolation, then polish with Newton steps on the quadrature
    u = np.interp(s, s_dense, u_dense)
    for _ in range(3):
        idx = np.clip(np.searchsorted(u_dense, u) - 1, 0, len(u_dense) - 2)
        du = u - u_dense[idx]
        sp0 = np.hypot(*_lemniscate_d1(a, u_dense[idx]))
        sp1 = np.hypot(*_lemniscate_d1(a, u))
        s_at = s_dense[idx] + 0.5 * du * (sp0 + sp1)
        u = u - (s_at - s) / sp1
    x, y = lemniscate_point(a, u)
    d1x, d1y = _lemniscate_d1(a, u)
    d2x, d2y = _lemniscate_d2(a, u)
    heading = np.arctan2(d1y, d1x)
    kappa = (d1x * d2y - d1y * d2x) / np.hypot(d1x, d1y) ** 3
    poses = np.column_stack([x, y, [wrap_angle(h) for h in heading]])
    inputs = np.column_stack([np.full(count, v_ref), v_ref * kappa])
    return ReferenceTrajectory(dt * np.arange(count), poses, inputs, dt, closed=True)


def square_corners(side: float) -> np.ndarray:
    h = 0.5 * side
    return np.array([[-h, -h], [h, -h], [h, h], [-h, h]])


def square_ref(side: float = 6.0, corner_radius: float = 0.8, v_ref: float = 1.0,
               dt: float = 1.0 / 30.0) -> ReferenceTrajectory:
    """Counter-clockwise square centred on the origin with filleted corners."""
    if not side > 2.0 * corner_radius:
        raise ValueError("side must exceed twice the corner radius")
    return generate_reference(square_corners(side), v_ref, dt, corner_radius, closed=True)
