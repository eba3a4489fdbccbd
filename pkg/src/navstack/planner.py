"""Grid A* planners and path post-processing.

``plan_baseline_astar`` is textbook 8-connected A*.  ``plan_improved_astar``
searches over (cell, heading) states so that every change of step direction
costs an extra ``turn_cost``, optionally closes the path early once the goal
is directly visible, and is usually followed by ``prune_collinear``.

Costs are in meters: a straight step costs ``p``, a diagonal ``sqrt(2) p``.
Diagonal steps may not cut the corner of a blocked cell.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from navstack.grid import CellIndex, OccupancyGrid, line_of_sight

# direction index -> (dcol, drow)
DIRECTIONS = ((1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1))
SQRT2 = math.sqrt(2.0)


class PlanningError(Exception):
    pass


class InvalidQuery(PlanningError, ValueError):
    pass


class Unreachable(PlanningError):
    pass


@dataclass(frozen=True)
class PlanQuery:
    start: CellIndex
    goal: CellIndex
    turning_cost: float | None = None  # meters; None -> 2 * resolution
    early_termination: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "start", CellIndex(*self.start))
        object.__setattr__(self, "goal", CellIndex(*self.goal))


@dataclass
class PlannedPath:
    cells: list[CellIndex]
    world_points: np.ndarray
    cost: float = 0.0
    expansions: int = 0
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_cells(cls, grid: OccupancyGrid, cells, cost: float = 0.0, expansions: int = 0) -> PlannedPath:
        cells = [CellIndex(int(c), int(r)) for c, r in cells]
        arr = np.array(cells, dtype=float).reshape(-1, 2)
        pts = grid.cell_centers(arr[:, 0], arr[:, 1])
        return cls(cells, pts, cost, expansions)

    def __len__(self) -> int:
        return len(self.cells)


def _validate(grid: OccupancyGrid, q: PlanQuery) -> None:
    for name, c in (("start", q.start), ("goal", q.goal)):
        if not grid.in_bounds(c):
            raise InvalidQuery(f"{name} {tuple(c)} is outside the map")
        if grid.blocked[c.row, c.col]:
            raise InvalidQuery(f"{name} {tuple(c)} is not free")


def neighbors(blocked: np.ndarray, col: int, row: int):
    """Yield ``(direction, col, row, step_cells)`` for legal 8-connected moves."""
    h, w = blocked.shape
    for d, (dc, dr) in enumerate(DIRECTIONS):
        nc, nr = col + dc, row + dr
        if not (0 <= nc < w and 0 <= nr < h) or blocked[nr, nc]:
            continue
        if dc and dr:
            if blocked[row, nc] or blocked[nr, col]:
                continue
            yield d, nc, nr, SQRT2
        else:
            yield d, nc, nr, 1.0


class _NeighborCache(dict):
    """Per-search memo of legal moves; every heading state of a cell shares them."""

    def __init__(self, blocked: np.ndarray):
        super().__init__()
        self.blocked = blocked

    def __missing__(self, key):
        out = self[key] = tuple(neighbors(self.blocked, key[0], key[1]))
        return out


def _heuristic(col: int, row: int, goal: CellIndex, p: float) -> float:
    return math.hypot(col - goal.col, row - goal.row) * p


def plan_baseline_astar(grid: OccupancyGrid, q: PlanQuery) -> PlannedPath:
    """Shortest 8-connected path by A* with the Euclidean heuristic.

    Open-list ties are broken by lower heuristic, then lower row-major index.
    """
    _validate(grid, q)
    p = grid.resolution
    blocked = grid.blocked
    w = grid.width
    start, goal = q.start, q.goal
    moves = _NeighborCache(blocked)
    g_best = {start: 0.0}
    parent: dict[CellIndex, CellIndex] = {}
    h0 = _heuristic(*start, goal, p)
    heap = [(h0, h0, start.row * w + start.col, start)]
    closed: set[CellIndex] = set()
    expansions = 0
    while heap:
        _, _, _, cur = heapq.heappop(heap)
        if cur in closed:
            continue
        closed.add(cur)
        expansions += 1
        if cur == goal:
            cells = [cur]
            while cells[-1] in parent:
                cells.append(parent[cells[-1]])
            return PlannedPath.from_cells(grid, cells[::-1], g_best[cur], expansions)
        g_cur = g_best[cur]
        for _, nc, nr, step in moves[(cur.col, cur.row)]:
            nxt = CellIndex(nc, nr)
            if nxt in closed:
                continue
            g_new = g_cur + step * p
            if g_new < g_best.get(nxt, math.inf):
                g_best[nxt] = g_new
                parent[nxt] = cur
                h = _heuristic(nc, nr, goal, p)
                heapq.heappush(heap, (g_new + h, h, nr * w + nc, nxt))
    raise Unreachable(f"no path from {tuple(start)} to {tuple(goal)}")


def plan_improved_astar(grid: OccupancyGrid, q: PlanQuery) -> PlannedPath:
    """A* with a turning penalty and optional line-of-sight early exit.

    Search states are (cell, incoming direction); a step whose direction
    differs from the previous one costs ``turning_cost`` extra.  With early
    termination, the first popped state that can see the goal is joined to it
    by a straight segment (no penalty on that closing segment).
    """
    _validate(grid, q)
    p = grid.resolution
    turn = 2.0 * p if q.turning_cost is None else float(q.turning_cost)
    if turn < 0:
        raise InvalidQuery("turning cost must be non-negative")
    blocked = grid.blocked
    w = grid.width
    start, goal = q.start, q.goal

    Key = tuple  # (col, row, dir) with dir -1 at the start
    s0: Key = (start.col, start.row, -1)
    moves = _NeighborCache(blocked)
    g_best: dict[Key, float] = {s0: 0.0}
    parent: dict[Key, Key] = {}
    h0 = _heuristic(*start, goal, p)
    heap = [(h0, h0, start.row * w + start.col, -1, s0)]
    closed: set[Key] = set()
    sees_goal: dict[tuple[int, int], bool] = {}  # all headings of a cell share visibility
    expansions = 0
    while heap:
        _, _, _, _, cur = heapq.heappop(heap)
        if cur in closed:
            continue
        closed.add(cur)
        expansions += 1
        col, row, d_in = cur
        g_cur = g_best[cur]
        reached = (col, row) == tuple(goal)
        shortcut = False
        if not reached and q.early_termination:
            shortcut = sees_goal.get((col, row))
            if shortcut is None:
                shortcut = sees_goal[(col, row)] = line_of_sight(grid, (col, row), goal)
        if reached or shortcut:
            keys = [cur]
            while keys[-1] in parent:
                keys.append(parent[keys[-1]])
            cells = [CellIndex(k[0], k[1]) for k in reversed(keys)]
            cost = g_cur
            if shortcut:
                cost += _heuristic(col, row, goal, p)
                cells.append(goal)
            path = PlannedPath.from_cells(grid, cells, cost, expansions)
            path.meta["early_exit"] = shortcut
            return path
        for d, nc, nr, step in moves[(col, row)]:
            nxt = (nc, nr, d)
            if nxt in closed:
                continue
            g_new = g_cur + step * p + (turn if d_in >= 0 and d != d_in else 0.0)
            if g_new < g_best.get(nxt, math.inf):
                g_best[nxt] = g_new
                parent[nxt] = cur
                h = _heuristic(nc, nr, goal, p)
                heapq.heappush(heap, (g_new + h, h, nr * w + nc, d, nxt))
    raise Unreachable(f"no path from {tuple(start)} to {tuple(goal)}")


def _collinear(a, b, c) -> bool:
    d1 = (b[0] - a[0], b[1] - a[1])
    d2 = (c[0] - b[0], c[1] - b[1])
    return d1[0] * d2[1] - d1[1] * d2[0] == 0 and d1[0] * d2[0] + d1[1] * d2[1] > 0


def _string_pull(grid: OccupancyGrid, cells: list[CellIndex]) -> list[CellIndex]:
    """Walk forward from each anchor while the next path cell stays visible."""
    out = [cells[0]]
    i = 0
    while i < len(cells) - 1:
        j = i + 1
        while j + 1 < len(cells) and line_of_sight(grid, cells[i], cells[j + 1]):
            j += 1
        out.append(cells[j])
        i = j
    return out


def _farthest_visible(grid: OccupancyGrid, pts: list[CellIndex]) -> list[CellIndex]:
    out = [pts[0]]
    i = 0
    while i < len(pts) - 1:
        j = len(pts) - 1
        while j > i + 1 and not line_of_sight(grid, pts[i], pts[j]):
            j -= 1
        out.append(pts[j])
        i = j
    return out


def prune_collinear(path: PlannedPath, grid: OccupancyGrid | None = None) -> PlannedPath:
    """Drop redundant waypoints.

    Removes every interior node collinear with its neighbours (exact integer
    test).  With a grid, nodes whose neighbours see each other are removed
    too: a string-pulling pass over all path cells, then repeated
    farthest-visible shortcuts until nothing changes.  Consecutive output
    waypoints are always mutually visible.
    """
    cells = list(path.cells)
    if len(cells) <= 2:
        return PlannedPath.from_cells(grid, cells, path.cost, path.expansions) if grid else path
    if grid is not None:
        cells = _string_pull(grid, cells)
    out = [cells[0]]
    for k in range(1, len(cells) - 1):
        if not _collinear(out[-1], cells[k], cells[k + 1]):
            out.append(cells[k])
    out.append(cells[-1])

    if grid is not None:
        while True:
            short = _farthest_visible(grid, out)
            if len(short) == len(out):
                break
            out = short
        pruned = PlannedPath.from_cells(grid, out, path.cost, path.expansions)
        pruned.meta.update(path.meta)
        return pruned
    # no grid: keep the original world coordinates of retained cells
    idx = []
    j = 0
    for c in out:
        while path.cells[j] != c:
            j += 1
        idx.append(j)
    return PlannedPath(out, path.world_points[idx], path.cost, path.expansions, dict(path.meta))


def path_metrics(points) -> dict[str, float]:
    """Length (m), total turning angle (deg) and number of inflection points of a polyline."""
    pts = np.asarray(getattr(points, "world_points", points), dtype=float).reshape(-1, 2)
    if len(pts) < 2:
        raise ValueError("need at least two waypoints")
    seg = np.diff(pts, axis=0)
    length = float(np.linalg.norm(seg, axis=1).sum())
    angles = []
    for a, b in zip(seg[:-1], seg[1:]):
        cross = a[0] * b[1] - a[1] * b[0]
        angles.append(abs(math.atan2(cross, float(a @ b))))
    angles = np.array(angles)
    return {"length": length,
            "total_turning_angle": float(np.degrees(angles.sum())) if angles.size else 0.0,
            "inflection_count": int(np.count_nonzero(angles > 1e-9))}
