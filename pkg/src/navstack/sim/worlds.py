"""Fixture worlds for the experiments.

All worlds are deterministic.  Geometry is a list of axis-aligned
rectangles ``(x0, y0, x1, y1)`` in meters, rasterised onto a grid anchored at
the world origin so that maps built from the synthetic point cloud share its
lattice.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from navstack.grid import OCCUPIED, OccupancyGrid, PointCloud3

Rect = tuple[float, float, float, float]


def campus_map(seed: int = 0, size: int = 50, resolution: float = 0.25, buildings: int = 3,
               trees: int = 14) -> OccupancyGrid:
    """Open outdoor-style planning map: a few building blocks and scattered trees."""
    rng = np.random.default_rng(seed)
    occ = np.zeros((size, size), dtype=bool)
    for _ in range(buildings):
        w, h = rng.integers(4, 9, 2)
        c, r = rng.integers(3, size - 10, 2)
        occ[r:r + h, c:c + w] = True
    for _ in range(trees):
        c, r = rng.integers(0, size, 2)
        s = rng.integers(1, 3)
        occ[r:r + s, c:c + s] = True
    return OccupancyGrid.from_array(occ, resolution)


def rasterize(rects, width: float, height: float, resolution: float) -> OccupancyGrid:
    """Grid whose Occupied cells are those with centre inside a rectangle."""
    w, h = int(round(width / resolution)), int(round(height / resolution))
    xs = (np.arange(w) + 0.5) * resolution
    ys = (np.arange(h) + 0.5) * resolution
    gx, gy = np.meshgrid(xs, ys)
    occ = np.zeros((h, w), dtype=bool)
    for x0, y0, x1, y1 in rects:
        occ |= (gx >= x0) & (gx <= x1) & (gy >= y0) & (gy <= y1)
    return OccupancyGrid.from_array(occ, resolution)


def _walls(width: float, height: float, t: float) -> list[Rect]:
    return [(0, 0, width, t), (0, height - t, width, height), (0, 0, t, height), (width - t, 0, width, height)]


@dataclass(frozen=True)
class World:
    """Ground-truth geometry plus everything derived from it."""

    rects: tuple[Rect, ...]
    width: float
    height: float
    resolution: float = 0.25
    start: tuple[float, float] = (0.0, 0.0)
    goal: tuple[float, float] = (0.0, 0.0)

    def grid(self) -> OccupancyGrid:
        return rasterize(self.rects, self.width, self.height, self.resolution)

    def cloud(self, seed: int = 0, canopy: tuple[Rect, ...] = ()) -> PointCloud3:
        """Synthetic 3D scan of the world.

        Obstacles are sampled at body heights; a ground plane and any canopy
        rectangles (overhangs above head height) add points that the height
        filter must reject.
        """
        rng = np.random.default_rng(seed)
        step = self.resolution / 2
        pts = []
        for x0, y0, x1, y1 in self.rects:
            xs = np.arange(x0 + step / 2, x1, step)
            ys = np.arange(y0 + step / 2, y1, step)
            gx, gy = np.meshgrid(xs, ys)
            for z in (0.3, 1.0, 1.6):
                pts.append(np.column_stack([gx.ravel(), gy.ravel(), np.full(gx.size, z)]))
        gx, gy = np.meshgrid(np.arange(0.25, self.width, 0.5), np.arange(0.25, self.height, 0.5))
        pts.append(np.column_stack([gx.ravel(), gy.ravel(), rng.uniform(-0.03, 0.05, gx.size)]))
        for x0, y0, x1, y1 in canopy:
            gx, gy = np.meshgrid(np.arange(x0, x1, step), np.arange(y0, y1, step))
            pts.append(np.column_stack([gx.ravel(), gy.ravel(), rng.uniform(2.4, 3.2, gx.size)]))
        xyz = np.vstack(pts)
        xyz[:, :2] += rng.uniform(-0.02, 0.02, (len(xyz), 2))
        return PointCloud3(xyz)


def corridor_world() -> World:
    """24 m x 10 m yard split by two staggered walls into an S-shaped route."""
    t = 0.25
    rects = _walls(24.0, 10.0, t) + [
        (8.0, 0.0, 8.25, 6.5),     # wall with a gap at the top
        (16.0, 3.5, 16.25, 10.0),  # wall with a gap at the bottom
        (4.0, 6.0, 4.5, 6.5),      # pillars
        (12.0, 7.5, 12.5, 8.0),
        (20.0, 6.0, 20.5, 6.5),
    ]
    return World(tuple(rects), 24.0, 10.0, 0.25, start=(2.0, 2.0), goal=(22.0, 8.0))


CORRIDOR_CANOPY: tuple[Rect, ...] = ((9.0, 2.0, 14.0, 6.0),)


def structured_room() -> World:
    """Asymmetric room used to register laser scans against the map."""
    t = 0.25
    rects = _walls(12.0, 10.0, t) + [
        (3.0, 6.0, 6.0, 6.25),   # L-shaped partition
        (3.0, 3.5, 3.25, 6.0),
        (8.0, 2.0, 9.0, 3.0),    # block
        (9.5, 7.0, 9.75, 9.75),  # stub wall
        (1.5, 1.5, 1.75, 1.75),  # post
    ]
    return World(tuple(rects), 12.0, 10.0, 0.25, start=(6.0, 4.5), goal=(6.0, 4.5))


def occupied_fraction(grid: OccupancyGrid) -> float:
    return float(np.mean(grid.cells == OCCUPIED))
