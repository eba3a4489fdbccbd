import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from navstack.grid import (FREE, OCCUPIED, UNKNOWN, CellIndex, EmptyMapError, GridError, GridParseError,
                           OccupancyGrid, OutOfBoundsError, PointCloud3, height_filter, inflate,
                           inflation_radius_cells, line_of_sight, load_cloud, load_grid, project_to_grid,
                           save_cloud, save_grid, supercover_cells)
from navstack.se2 import Pose2


def dilate_brute(cells: np.ndarray, n: int) -> np.ndarray:
    h, w = cells.shape
    out = cells.copy()
    seeds = np.argwhere(cells != FREE)
    for r in range(h):
        for c in range(w):
            if any(max(abs(r - sr), abs(c - sc)) <= n for sr, sc in seeds):
                out[r, c] = max(out[r, c], OCCUPIED) if cells[r, c] == FREE else cells[r, c]
    return out


def random_grid(rng, w, h, density=0.2, p=0.1, unknown=0.0) -> OccupancyGrid:
    u = rng.random((h, w))
    cells = np.where(u < density, OCCUPIED, FREE)
    cells = np.where(u > 1 - unknown, UNKNOWN, cells)
    return OccupancyGrid.from_array(cells, p)


def los_dense(grid: OccupancyGrid, a, b, step=0.01) -> bool:
    """Sample the centre-to-centre segment and also test both cells at exact corner crossings."""
    (ax, ay), (bx, by) = (a[0] + 0.5, a[1] + 0.5), (b[0] + 0.5, b[1] + 0.5)
    n = max(2, int(math.hypot(bx - ax, by - ay) / step) + 2)
    for t in np.linspace(0, 1, n):
        x, y = ax + t * (bx - ax), ay + t * (by - ay)
        if grid.blocked[math.floor(y), math.floor(x)]:
            return False
    # segments through a lattice corner touch all four cells there
    dx, dy = bx - ax, by - ay
    for xi in range(min(a[0], b[0]) + 1, max(a[0], b[0]) + 1):
        y = ay + (xi - ax) / dx * dy
        if abs(y - round(y)) < 1e-9:
            yi = int(round(y))
            for cc, rr in ((xi - 1, yi - 1), (xi, yi - 1), (xi - 1, yi), (xi, yi)):
                if 0 <= cc < grid.width and 0 <= rr < grid.height and grid.blocked[rr, cc]:
                    return False
    return True


def test_inflation_radius_examples():
    assert inflation_radius_cells(0.0, 0.1) == 0
    assert inflation_radius_cells(0.35, 0.1) == 4
    assert inflation_radius_cells(0.4, 0.1) == 4
    with pytest.raises(GridError):
        inflation_radius_cells(0.3, 0.0)


def test_inflate_zero_is_identity():
    g = random_grid(np.random.default_rng(0), 12, 9)
    assert inflate(g, 0.0) == g


def test_inflate_single_cell():
    g = OccupancyGrid.empty(7, 7, 0.1).with_cells(np.pad([[1]], 3).astype(np.uint8))
    out = inflate(g, 0.1)
    expect = np.zeros((7, 7), bool)
    expect[2:5, 2:5] = True
    np.testing.assert_array_equal(out.blocked, expect)


def test_inflate_matches_brute_force_30x30():
    rng = np.random.default_rng(1)
    g = random_grid(rng, 30, 30, 0.03, unknown=0.02)
    out = inflate(g, 0.2)
    np.testing.assert_array_equal(out.blocked, dilate_brute(g.cells, 2) != FREE)
    assert np.array_equal(g.cells, random_grid(np.random.default_rng(1), 30, 30, 0.03, unknown=0.02).cells)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 50), st.integers(1, 50), st.integers(0, 3), st.integers(0, 2**32 - 1))
def test_inflate_is_chebyshev_dilation(w, h, n, seed):
    g = random_grid(np.random.default_rng(seed), w, h, 0.02, p=0.25, unknown=0.01)
    out = inflate(g, n * 0.25)
    assert np.all(out.blocked >= g.blocked)
    np.testing.assert_array_equal(out.blocked, dilate_brute(g.cells, n) != FREE)


def test_height_filter_examples():
    assert len(height_filter(PointCloud3(np.zeros((0, 3))), 0.1, 2.0)) == 0
    c = PointCloud3([[0, 0, -0.1], [1, 0, 0.2], [2, 0, 1.9], [3, 0, 2.5]])
    np.testing.assert_array_equal(height_filter(c, 0.1, 2.0).points[:, 2], [0.2, 1.9])
    with pytest.raises(GridError):
        height_filter(c, 2.0, 0.1)


def test_height_filter_recount():
    rng = np.random.default_rng(2)
    pts = rng.uniform(0, 10, (10_000, 3))
    out = height_filter(PointCloud3(pts), 3.0, 6.0)
    assert len(out) == sum(1 for z in pts[:, 2] if 3.0 <= z <= 6.0)
    assert np.all((out.points[:, 2] >= 3.0) & (out.points[:, 2] <= 6.0))


def test_project_single_point():
    c = PointCloud3([[1.23, 4.56, 0.5]])
    g = project_to_grid(c, 0.1, Pose2(), 1)
    assert int((g.cells == OCCUPIED).sum()) == 1
    assert g.cells[g.world_to_cell((1.23, 4.56))[::-1]] == OCCUPIED
    g2 = project_to_grid(c, 0.1, Pose2(), 2)
    assert not g2.blocked.any()


def test_project_wall_of_points():
    rng = np.random.default_rng(3)
    xs = rng.uniform(0, 5, 500)
    ys = 2.05 + rng.uniform(-0.01, 0.01, 500)
    g = project_to_grid(PointCloud3(np.column_stack([xs, ys, np.ones(500)])), 0.1, Pose2(), 1)
    occ = np.argwhere(g.cells == OCCUPIED)
    assert len(np.unique(occ[:, 0])) == 1
    row = occ[0, 0]
    assert g.cell_to_world((0, row))[1] == pytest.approx(2.05, abs=0.05)
    assert len({tuple(g.world_to_cell((x, y))) for x, y in zip(xs, ys)}) == len(occ)
    assert 48 <= len(occ) <= 51


def test_project_empty_cloud():
    with pytest.raises(EmptyMapError):
        project_to_grid(PointCloud3(np.zeros((0, 3))), 0.1)


def test_world_cell_examples():
    g = OccupancyGrid.empty(10, 10, 1.0)
    assert g.world_to_cell((0.5, 0.5)) == (0, 0)
    for c in range(10):
        for r in range(10):
            assert g.world_to_cell(g.cell_to_world((c, r))) == (c, r)
    g2 = OccupancyGrid.empty(30, 30, 0.5, Pose2(-5, -5, 0))
    assert g2.world_to_cell((0, 0)) == (10, 10)
    with pytest.raises(OutOfBoundsError):
        g2.world_to_cell((20, 0))


def test_rotated_origin_round_trip():
    g = OccupancyGrid.empty(8, 6, 0.3, Pose2(1, 2, 0.7))
    for c in range(8):
        for r in range(6):
            assert g.world_to_cell(g.cell_to_world((c, r))) == (c, r)


def test_line_of_sight_examples():
    g = OccupancyGrid.empty(20, 20, 0.1)
    assert line_of_sight(g, (3, 3), (3, 3))
    assert line_of_sight(g, (0, 0), (19, 7))
    cells = np.zeros((20, 20), np.uint8)
    cells[:, 10] = OCCUPIED
    wall = g.with_cells(cells)
    assert not line_of_sight(wall, (2, 5), (17, 12))
    with pytest.raises(OutOfBoundsError):
        line_of_sight(g, (0, 0), (20, 0))


def test_line_of_sight_gap_matches_dense_oracle():
    rng = np.random.default_rng(4)
    base = np.zeros((20, 20), np.uint8)
    base[:, 10] = OCCUPIED
    for _ in range(60):
        gap = int(rng.integers(0, 20))
        cells = base.copy()
        cells[gap, 10] = FREE
        g = OccupancyGrid.from_array(cells, 0.1)
        a = (int(rng.integers(0, 10)), int(rng.integers(0, 20)))
        b = (int(rng.integers(11, 20)), int(rng.integers(0, 20)))
        assert line_of_sight(g, a, b) == los_dense(g, a, b)


def test_diagonal_gap_not_threaded():
    cells = np.zeros((4, 4), np.uint8)
    cells[1, 2] = cells[2, 1] = OCCUPIED
    g = OccupancyGrid.from_array(cells, 1.0)
    assert not line_of_sight(g, (0, 0), (3, 3))
    assert {(1, 2), (2, 1)} <= set(supercover_cells((0, 0), (3, 3)))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_line_of_sight_symmetric_and_dense(seed):
    rng = np.random.default_rng(seed)
    g = random_grid(rng, 15, 15, 0.15)
    a = tuple(int(v) for v in rng.integers(0, 15, 2))
    b = tuple(int(v) for v in rng.integers(0, 15, 2))
    assert line_of_sight(g, a, b) == line_of_sight(g, b, a)
    assert line_of_sight(g, a, b) == los_dense(g, a, b)


def test_supercover_endpoints_and_connectivity():
    rng = np.random.default_rng(5)
    for _ in range(200):
        a, b = rng.integers(-20, 20, 2), rng.integers(-20, 20, 2)
        cells = supercover_cells(tuple(a), tuple(b))
        assert cells[0] == CellIndex(*a) and cells[-1] == CellIndex(*b)
        for p, q in zip(cells[:-1], cells[1:]):
            assert max(abs(p[0] - q[0]), abs(p[1] - q[1])) == 1


def test_grid_file_round_trip(tmp_path):
    g = OccupancyGrid.empty(2, 2, 0.1)
    save_grid(g, tmp_path / "a.grid")
    assert load_grid(tmp_path / "a.grid") == g
    big = random_grid(np.random.default_rng(6), 100, 100, 0.3, p=0.05, unknown=0.1)
    big = OccupancyGrid(big.width, big.height, 0.05, Pose2(-1.5, 2.25, 0.3), big.cells)
    save_grid(big, tmp_path / "b.grid")
    back = load_grid(tmp_path / "b.grid")
    assert back == big
    save_grid(back, tmp_path / "c.grid")
    assert (tmp_path / "b.grid").read_bytes() == (tmp_path / "c.grid").read_bytes()


def test_grid_file_first_lines(tmp_path):
    save_grid(OccupancyGrid.from_array(np.array([[0, 1, 2]]), 0.25), tmp_path / "g.grid")
    lines = (tmp_path / "g.grid").read_text().split("\n")
    assert lines[0] == "gridmap 1"
    assert lines[1].startswith("width 3 height 1 resolution 0.25 origin")
    assert lines[2] == ".#?"


@pytest.mark.parametrize("body, line", [
    ("gridmap 1\nwidth 3 height 2 resolution 0.1 origin 0 0 0\n...\n....\n", 4),
    ("gridmap 1\nwidth 2 height 1 resolution 0.1 origin 0 0 0\n.x\n", 3),
    ("gridmap 2\nwidth 1 height 1 resolution 0.1 origin 0 0 0\n.\n", 1),
    ("gridmap 1\nwidth 2 height 2 resolution 0.1 origin 0 0 0\n..\n", 2),
])
def test_grid_parse_errors(tmp_path, body, line):
    path = tmp_path / "bad.grid"
    path.write_text(body)
    with pytest.raises(GridParseError) as err:
        load_grid(path)
    assert err.value.lineno >= min(line, 2)
    assert str(path) in str(err.value)


def test_row_length_error_names_row(tmp_path):
    path = tmp_path / "bad.grid"
    path.write_text("gridmap 1\nwidth 3 height 2 resolution 0.1 origin 0 0 0\n...\n....\n")
    with pytest.raises(GridParseError) as err:
        load_grid(path)
    assert err.value.lineno == 4


def test_cloud_round_trip(tmp_path):
    rng = np.random.default_rng(7)
    c = PointCloud3(rng.normal(size=(50, 3)))
    save_cloud(c, tmp_path / "c.xyz")
    np.testing.assert_array_equal(load_cloud(tmp_path / "c.xyz").points, c.points)
    (tmp_path / "d.xyz").write_text("# comment\n1 2 3\n\n4 5 6  # trailing\n")
    np.testing.assert_array_equal(load_cloud(tmp_path / "d.xyz").points, [[1, 2, 3], [4, 5, 6]])


def test_raycast_wall_distance():
    cells = np.zeros((40, 40), np.uint8)
    cells[:, 30] = OCCUPIED
    g = OccupancyGrid.from_array(cells, 0.1)
    for x0 in (0.55, 1.02, 2.37):
        d = g.raycast((x0, 2.0), 0.0, 10.0)
        assert abs(d - (3.0 - x0)) <= 0.05
        centre = g.raycast((x0, 2.0), 0.0, 10.0, "centre")
        assert centre == pytest.approx(3.05 - x0, abs=1e-9)
    with pytest.raises(ValueError):
        g.raycast((0.5, 2.0), 0.0, 10.0, "back")
