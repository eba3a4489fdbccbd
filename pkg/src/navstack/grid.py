"""2D occupancy grids: construction, inflation, point-cloud projection,
visibility queries and the ASCII map format.

Cell ``(col, row)`` covers ``[col*p, (col+1)*p) x [row*p, (row+1)*p)`` in the
grid frame, whose pose in the map frame is ``origin``.  Cells are stored
row-major in a ``(height, width)`` uint8 array.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from navstack.se2 import Pose2, inverse

FREE = 0
OCCUPIED = 1
UNKNOWN = 2

GLYPHS = {FREE: ".", OCCUPIED: "#", UNKNOWN: "?"}
_GLYPH_TO_CELL = {v: k for k, v in GLYPHS.items()}

MAGIC = "gridmap 1"


class GridError(ValueError):
    pass


class OutOfBoundsError(GridError, IndexError):
    pass


class EmptyMapError(GridError):
    pass


class GridParseError(GridError):
    def __init__(self, path, lineno: int, msg: str):
        super().__init__(f"{path}:{lineno}: {msg}")
        self.lineno = lineno


class CellIndex(NamedTuple):
    col: int
    row: int


@dataclass(frozen=True, eq=False)
class OccupancyGrid:
    width: int
    height: int
    resolution: float
    origin: Pose2
    cells: np.ndarray

    def __post_init__(self) -> None:
        if self.resolution <= 0:
            raise GridError("resolution must be positive")
        if self.width < 1 or self.height < 1:
            raise GridError("grid must have at least one cell")
        cells = np.asarray(self.cells, dtype=np.uint8)
        if cells.size != self.width * self.height:
            raise GridError(f"cell count {cells.size} != {self.width} x {self.height}")
        cells = cells.reshape(self.height, self.width).copy()
        if np.any(cells > UNKNOWN):
            raise GridError("unknown cell state")
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)

    @classmethod
    def empty(cls, width: int, height: int, resolution: float, origin: Pose2 | None = None) -> OccupancyGrid:
        return cls(width, height, resolution, origin or Pose2(), np.zeros((height, width), np.uint8))

    @classmethod
    def from_array(cls, occupied: np.ndarray, resolution: float, origin: Pose2 | None = None) -> OccupancyGrid:
        """Build from a ``(height, width)`` array of cell states (or booleans)."""
        arr = np.asarray(occupied).astype(np.uint8)
        return cls(arr.shape[1], arr.shape[0], resolution, origin or Pose2(), arr)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, OccupancyGrid):
            return NotImplemented
        return (self.width == other.width and self.height == other.height
                and self.resolution == other.resolution and self.origin == other.origin
                and np.array_equal(self.cells, other.cells))

    def with_cells(self, cells: np.ndarray) -> OccupancyGrid:
        return OccupancyGrid(self.width, self.height, self.resolution, self.origin, cells)

    @property
    def blocked(self) -> np.ndarray:
        """Cells a planner must avoid: Occupied or Unknown."""
        return self.cells != FREE

    def in_bounds(self, c) -> bool:
        return 0 <= c[0] < self.width and 0 <= c[1] < self.height

    def check(self, c) -> CellIndex:
        if not self.in_bounds(c):
            raise OutOfBoundsError(f"cell {tuple(c)} outside {self.width}x{self.height} grid")
        return CellIndex(int(c[0]), int(c[1]))

    def is_free(self, c) -> bool:
        c = self.check(c)
        return self.cells[c.row, c.col] == FREE

    def world_to_cell(self, q) -> CellIndex:
        lx, ly = self.to_grid_frame(np.asarray(q, dtype=float).reshape(1, 2))[0]
        c = CellIndex(math.floor(lx / self.resolution), math.floor(ly / self.resolution))
        if not self.in_bounds(c):
            raise OutOfBoundsError(f"point {tuple(q)} lies outside the map")
        return c

    def cell_to_world(self, c) -> tuple[float, float]:
        c = self.check(c)
        x, y = self.origin.transform_points([(c.col + 0.5) * self.resolution, (c.row + 0.5) * self.resolution])[0]
        return float(x), float(y)

    def to_grid_frame(self, pts: np.ndarray) -> np.ndarray:
        return inverse(self.origin).transform_points(pts)

    def cell_centers(self, cols: np.ndarray, rows: np.ndarray) -> np.ndarray:
        local = np.column_stack([(cols + 0.5) * self.resolution, (rows + 0.5) * self.resolution])
        return self.origin.transform_points(local)

    @cached_property
    def occupied_centers(self) -> np.ndarray:
        rows, cols = np.nonzero(self.cells == OCCUPIED)
        return self.cell_centers(cols, rows)

    @cached_property
    def occupied_tree(self) -> cKDTree:
        return cKDTree(self.occupied_centers)

    def raycast(self, start, angle: float, max_range: float, depth: str = "face") -> float:
        """Distance from ``start`` along ``angle`` (map frame) to the first blocked cell.

        With ``depth="face"`` the range ends where the beam enters the cell;
        ``depth="centre"`` reports the depth of the cell centre along the beam
        instead, so returns sit on the cell-centre lattice rather than one side
        of it.  Returns ``max_range`` if nothing is hit.  A start inside a
        blocked cell gives 0.
        """
        if depth not in ("face", "centre"):
            raise ValueError("depth must be 'face' or 'centre'")
        p = self.resolution
        lx, ly = self.to_grid_frame(np.asarray(start, dtype=float).reshape(1, 2))[0]
        a = angle - self.origin.theta
        dx, dy = math.cos(a), math.sin(a)
        col, row = math.floor(lx / p), math.floor(ly / p)
        step_c = 1 if dx > 0 else -1
        step_r = 1 if dy > 0 else -1
        t_max_c = (((col + (step_c > 0)) * p - lx) / dx) if dx != 0 else math.inf
        t_max_r = (((row + (step_r > 0)) * p - ly) / dy) if dy != 0 else math.inf
        t_dc = p / abs(dx) if dx != 0 else math.inf
        t_dr = p / abs(dy) if dy != 0 else math.inf
        t = 0.0
        while t <= max_range:
            if not (0 <= col < self.width and 0 <= row < self.height):
                return max_range
            if self.cells[row, col] != FREE:
                if depth == "face" or t == 0.0:
                    return t
                t_exit = min(t_max_c, t_max_r)
                centre = (col + 0.5) * p - lx, (row + 0.5) * p - ly
                return min(max(centre[0] * dx + centre[1] * dy, t), t_exit, max_range)
            if t_max_c < t_max_r:
                t, col = t_max_c, col + step_c
                t_max_c += t_dc
            else:
                t, row = t_max_r, row + step_r
                t_max_r += t_dr
        return max_range


def inflation_radius_cells(d_s: float, p: float) -> int:
    """Number of cells obstacles are grown by for a clearance ``d_s``."""
    if p <= 0:
        raise GridError("resolution must be positive")
    if d_s < 0:
        raise GridError("clearance must be non-negative")
    return math.ceil(d_s / p)


def inflate(grid: OccupancyGrid, d_s: float) -> OccupancyGrid:
    """Chebyshev dilation of Occupied and Unknown cells by ``ceil(d_s / p)`` cells."""
    n_ex = inflation_radius_cells(d_s, grid.resolution)
    if n_ex == 0:
        return grid.with_cells(grid.cells)
    seeds = grid.cells != FREE
    grown = ndimage.binary_dilation(seeds, structure=np.ones((2 * n_ex + 1, 2 * n_ex + 1), bool))
    out = grid.cells.copy()
    out[grown] = OCCUPIED
    return grid.with_cells(out)


@dataclass(frozen=True, eq=False)
class PointCloud3:
    points: np.ndarray

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise ValueError("point cloud contains non-finite coordinates")
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return len(self.points)


def height_filter(cloud: PointCloud3, z_min: float = 0.1, z_max: float = 2.0) -> PointCloud3:
    if z_min > z_max:
        raise GridError(f"z_min {z_min} > z_max {z_max}")
    z = cloud.points[:, 2]
    return PointCloud3(cloud.points[(z >= z_min) & (z <= z_max)])


def project_to_grid(cloud: PointCloud3, p: float, origin: Pose2 | None = None, min_hits: int = 1) -> OccupancyGrid:
    """Flatten a (height-filtered) cloud onto a grid aligned with ``origin``.

    The grid covers the cloud's bounding box plus one cell on every side; its
    cells sit on the lattice anchored at ``origin``.
    """
    if p <= 0:
        raise GridError("resolution must be positive")
    if min_hits < 1:
        raise GridError("min_hits must be at least 1")
    if len(cloud) == 0:
        raise EmptyMapError("cannot project an empty point cloud")
    origin = origin or Pose2()
    local = inverse(origin).transform_points(cloud.points[:, :2])
    idx = np.floor(local / p).astype(np.int64)
    lo = idx.min(axis=0) - 1
    hi = idx.max(axis=0) + 1
    width, height = (hi - lo + 1).tolist()
    counts = np.zeros((height, width), dtype=np.int64)
    np.add.at(counts, (idx[:, 1] - lo[1], idx[:, 0] - lo[0]), 1)
    cells = np.where(counts >= min_hits, OCCUPIED, FREE).astype(np.uint8)
    corner = origin.transform_points(lo * p)[0]
    return OccupancyGrid(width, height, p, Pose2(corner[0], corner[1], origin.theta), cells)


def _supercover_walk(a, b):
    """Yield ``(col, row)`` along the supercover of the segment between cell centres."""
    x, y = int(a[0]), int(a[1])
    dx, dy = int(b[0]) - x, int(b[1]) - y
    nx, ny = abs(dx), abs(dy)
    sx = 1 if dx > 0 else -1
    sy = 1 if dy > 0 else -1
    yield x, y
    ix = iy = 0
    while ix < nx or iy < ny:
        decision = (1 + 2 * ix) * ny - (1 + 2 * iy) * nx
        if decision == 0:
            # exact corner crossing: both side cells are touched
            yield x + sx, y
            yield x, y + sy
            x += sx
            y += sy
            ix += 1
            iy += 1
        elif decision < 0:
            x += sx
            ix += 1
        else:
            y += sy
            iy += 1
        yield x, y


def supercover_cells(a, b) -> list[CellIndex]:
    """Every cell touched by the segment between the centres of cells ``a`` and ``b``.

    Where the segment passes exactly through a cell corner both side cells are
    included, so a diagonal cannot slip between two blocked cells.
    """
    return [CellIndex(c, r) for c, r in _supercover_walk(a, b)]


def line_of_sight(grid: OccupancyGrid, a, b) -> bool:
    """True when every supercover cell between ``a`` and ``b`` is Free."""
    grid.check(a)
    grid.check(b)
    cells = grid.cells
    for c, r in _supercover_walk(a, b):
        if cells[r, c] != FREE:
            return False
    return True


def _num(v) -> str:
    return repr(float(v))  # shortest text that round-trips


def save_grid(grid: OccupancyGrid, path: str | Path) -> None:
    o = grid.origin
    lines = [MAGIC, f"width {grid.width} height {grid.height} resolution {_num(grid.resolution)} "
                    f"origin {_num(o.x)} {_num(o.y)} {_num(o.theta)}"]
    lut = np.array([GLYPHS[FREE], GLYPHS[OCCUPIED], GLYPHS[UNKNOWN]])
    lines.extend("".join(row) for row in lut[grid.cells])
    Path(path).write_text("\n".join(lines) + "\n")


def load_grid(path: str | Path) -> OccupancyGrid:
    text = Path(path).read_text()
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or lines[0].strip() != MAGIC:
        raise GridParseError(path, 1, f"expected header {MAGIC!r}")
    if len(lines) < 2:
        raise GridParseError(path, 2, "missing dimensions line")
    tok = lines[1].split()
    if len(tok) != 10 or tok[0::2][:3] != ["width", "height", "resolution"] or tok[6] != "origin":
        raise GridParseError(path, 2, "expected 'width W height H resolution P origin X Y THETA'")
    try:
        width, height = int(tok[1]), int(tok[3])
        resolution = float(tok[5])
        ox, oy, oth = float(tok[7]), float(tok[8]), float(tok[9])
    except ValueError as exc:
        raise GridParseError(path, 2, str(exc)) from None
    if width < 1 or height < 1 or resolution <= 0:
        raise GridParseError(path, 2, "dimensions and resolution must be positive")
    rows = lines[2:]
    if len(rows) != height:
        raise GridParseError(path, 2 + min(len(rows), height) + (len(rows) > height),
                             f"expected {height} rows, found {len(rows)}")
    cells = np.empty((height, width), dtype=np.uint8)
    for r, row in enumerate(rows):
        lineno = r + 3
        if len(row) != width:
            raise GridParseError(path, lineno, f"row {r} has {len(row)} glyphs, expected {width}")
        for c, ch in enumerate(row):
            try:
                cells[r, c] = _GLYPH_TO_CELL[ch]
            except KeyError:
                raise GridParseError(path, lineno, f"row {r}: unknown glyph {ch!r} at column {c}") from None
    return OccupancyGrid(width, height, resolution, Pose2(ox, oy, oth), cells)


def load_cloud(path: str | Path) -> PointCloud3:
    pts = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise GridParseError(path, lineno, "expected 'x y z'")
        try:
            pts.append([float(v) for v in parts])
        except ValueError as exc:
            raise GridParseError(path, lineno, str(exc)) from None
    return PointCloud3(np.array(pts).reshape(-1, 3))


def save_cloud(cloud: PointCloud3, path: str | Path) -> None:
    with open(path, "w") as fh:
        for x, y, z in cloud.points.tolist():
            fh.write(f"{x!r} {y!r} {z!r}\n")
