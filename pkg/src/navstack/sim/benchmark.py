"""Randomized start-goal comparison of the two grid planners."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from navstack.grid import CellIndex, OccupancyGrid, inflate, line_of_sight
from navstack.planner import (PlannedPath, PlanQuery, path_metrics, plan_baseline_astar,
                              plan_improved_astar, prune_collinear)

METRICS = ("length", "total_turning_angle", "inflection_count", "time_ms")
FOUR_CONNECTED = ndimage.generate_binary_structure(2, 1)


class SamplingError(RuntimeError):
    pass


@dataclass
class BenchmarkResult:
    queries: list[tuple[CellIndex, CellIndex]] = field(default_factory=list)
    baseline: list[dict] = field(default_factory=list)
    improved: list[dict] = field(default_factory=list)
    paths: list[tuple[PlannedPath, PlannedPath]] = field(default_factory=list)
    resampled: int = 0

    def means(self) -> dict[str, dict[str, float]]:
        return {name: {k: float(np.mean([r[k] for r in rows])) for k in METRICS}
                for name, rows in (("baseline", self.baseline), ("improved", self.improved))}

    def table(self) -> list[tuple[str, float, float]]:
        """Rows of ``(metric, baseline mean, improved mean)``."""
        m = self.means()
        return [(k, m["baseline"][k], m["improved"][k]) for k in METRICS]


def reachable_components(grid: OccupancyGrid) -> np.ndarray:
    """Label Free regions; without corner cutting, 8-connected moves reach exactly the 4-connected set."""
    labels, _ = ndimage.label(~grid.blocked, structure=FOUR_CONNECTED)
    return labels


def sample_queries(grid: OccupancyGrid, n: int, seed: int, min_separation: float = 15.0,
                   max_tries: int = 100_000) -> tuple[list[tuple[CellIndex, CellIndex]], int]:
    """Rejection-sample ``n`` start-goal pairs in the same Free component.

    Returns the pairs and the number of rejected draws.
    """
    labels = reachable_components(grid)
    if np.bincount(labels.ravel())[1:].max(initial=0) < 2:
        raise SamplingError("map has no two mutually reachable free cells")
    rng = np.random.default_rng(seed)
    out: list[tuple[CellIndex, CellIndex]] = []
    rejected = 0
    for _ in range(max_tries):
        if len(out) == n:
            break
        a = rng.integers(0, (grid.width, grid.height))
        b = rng.integers(0, (grid.width, grid.height))
        la, lb = labels[a[1], a[0]], labels[b[1], b[0]]
        if la == 0 or la != lb or np.hypot(*(a - b)) < min_separation:
            rejected += 1
            continue
        out.append((CellIndex(int(a[0]), int(a[1])), CellIndex(int(b[0]), int(b[1]))))
    if len(out) < n:
        raise SamplingError(f"only {len(out)} of {n} queries found after {max_tries} draws")
    return out, rejected


def path_is_free(grid: OccupancyGrid, path: PlannedPath) -> bool:
    """Every waypoint Free and every consecutive pair mutually visible."""
    if any(grid.blocked[c.row, c.col] for c in path.cells):
        return False
    return all(line_of_sight(grid, a, b) for a, b in zip(path.cells[:-1], path.cells[1:]))


def run_planning_benchmark(grid: OccupancyGrid, n_queries: int = 20, seed: int = 0, d_s: float = 0.3,
                           turning_cost: float | None = None, min_separation: float = 15.0) -> BenchmarkResult:
    """Plan every sampled query with both planners on the inflated map.

    The baseline path is reported as planned (every grid step).  The
    improved path includes early exit and pruning, and its time covers both.
    """
    inflated = inflate(grid, d_s) if d_s > 0 else grid
    queries, rejected = sample_queries(inflated, n_queries, seed, min_separation)
    res = BenchmarkResult(resampled=rejected)
    for start, goal in queries:
        q = PlanQuery(start, goal, turning_cost)
        t0 = time.perf_counter()
        base = plan_baseline_astar(inflated, q)
        t1 = time.perf_counter()
        imp = prune_collinear(plan_improved_astar(inflated, q), inflated)
        t2 = time.perf_counter()
        for path in (base, imp):
            if not path_is_free(inflated, path):
                raise AssertionError(f"planner produced a colliding path for {start}->{goal}")
        res.queries.append((start, goal))
        res.baseline.append({**_metrics(base), "time_ms": (t1 - t0) * 1e3})
        res.improved.append({**_metrics(imp), "time_ms": (t2 - t1) * 1e3})
        res.paths.append((base, imp))
    return res


def _metrics(path: PlannedPath) -> dict:
    if len(path.cells) < 2:
        return {"length": 0.0, "total_turning_angle": 0.0, "inflection_count": 0}
    return path_metrics(path)
