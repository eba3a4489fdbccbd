"""Per-tick experiment records and the tracking metrics derived from them."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

RECORD_FIELDS = ("t", "x_true", "y_true", "theta_true", "x_est", "y_est", "theta_est",
                 "x_ref", "y_ref", "theta_ref", "v_cmd", "omega_cmd", "delta_cmd", "solve_ms")


def _point_segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    denom = np.einsum("ij,ij->i", ab, ab)
    t = np.where(denom > 0, np.einsum("ij,ij->i", p - a, ab) / np.where(denom > 0, denom, 1.0), 0.0)
    t = np.clip(t, 0.0, 1.0)
    proj = a + t[:, None] * ab
    return np.linalg.norm(p - proj, axis=1)


def distance_to_path(points: np.ndarray, path: np.ndarray, closed: bool = False) -> np.ndarray:
    """Distance from each point to the nearest point on a polyline."""
    path = np.asarray(path, dtype=float)
    if closed:
        path = np.vstack([path, path[:1]])
    if len(path) == 1:
        return np.linalg.norm(points - path[0], axis=1)
    a, b = path[:-1], path[1:]
    out = np.empty(len(points))
    for i, p in enumerate(np.asarray(points, dtype=float)):
        out[i] = _point_segment_distance(np.broadcast_to(p, a.shape), a, b).min()
    return out


def spatial_rmse(points: np.ndarray, path: np.ndarray, closed: bool = False) -> float:
    """Root mean square distance from executed positions to the reference path."""
    d = distance_to_path(points, path, closed)
    return float(np.sqrt(np.mean(d**2)))


@dataclass
class RunLog:
    """Experiment record: one row per control tick plus a summary.

    RMSE is spatial: the distance from each true position to the nearest
    point of the reference path, not to the time-indexed reference sample.
    """

    records: list[tuple] = field(default_factory=list)
    estimation: list[tuple] = field(default_factory=list)  # rows of ESTIMATION_LOG_FIELDS
    reference_path: np.ndarray | None = None
    closed_path: bool = False
    complete: bool = True
    success: bool | None = None
    diagnosis: str = ""
    meta: dict = field(default_factory=dict)

    def append(self, *values) -> None:
        if len(values) != len(RECORD_FIELDS):
            raise ValueError(f"expected {len(RECORD_FIELDS)} values, got {len(values)}")
        self.records.append(tuple(float(v) for v in values))

    def __len__(self) -> int:
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        i = RECORD_FIELDS.index(name)
        return np.array([r[i] for r in self.records])

    @property
    def array(self) -> np.ndarray:
        return np.array(self.records, dtype=float).reshape(-1, len(RECORD_FIELDS))

    @property
    def true_positions(self) -> np.ndarray:
        a = self.array
        return a[:, 1:3]

    @property
    def rmse(self) -> float:
        if not self.records or self.reference_path is None:
            return float("nan")
        return spatial_rmse(self.true_positions, self.reference_path, self.closed_path)

    def solve_stats(self) -> dict[str, float]:
        ms = self.column("solve_ms")
        if ms.size == 0:
            return {"mean": float("nan"), "median": float("nan"), "p95": float("nan"), "max": float("nan")}
        return {"mean": float(ms.mean()), "median": float(np.median(ms)),
                "p95": float(np.percentile(ms, 95)), "max": float(ms.max())}

    def summary(self) -> dict[str, float | bool | str]:
        out: dict[str, float | bool | str] = {"rmse_m": self.rmse}
        out.update({f"solve_ms_{k}": v for k, v in self.solve_stats().items()})
        out["ticks"] = len(self)
        out["complete"] = self.complete
        if self.success is not None:
            out["success"] = self.success
        if self.diagnosis:
            out["diagnosis"] = self.diagnosis
        return out

    def deterministic_view(self) -> np.ndarray:
        """Records without the wall-clock column, for bitwise run comparisons."""
        return self.array[:, :-1]
