"""Baseline vs turn-penalised A* on the campus fixture.

Run from the repository root:  python3 demos/01_planning.py
"""

import numpy as np

from navstack.grid import inflate
from navstack.planner import PlanQuery, path_metrics, plan_baseline_astar, plan_improved_astar, prune_collinear
from navstack.reference import generate_reference
from navstack.sim.benchmark import run_planning_benchmark
from navstack.sim.worlds import campus_map, occupied_fraction

grid = campus_map(seed=0)
print(f"campus map: {grid.width} x {grid.height} cells at {grid.resolution} m, "
      f"{occupied_fraction(grid):.1%} occupied")

# grow obstacles by the robot radius so the planner can treat the robot as a point
inflated = inflate(grid, 0.3)
query = PlanQuery((2, 2), (45, 45))

base = plan_baseline_astar(inflated, query)
imp = prune_collinear(plan_improved_astar(inflated, query), inflated)
for name, path in (("baseline", base), ("improved", imp)):
    m = path_metrics(path)
    print(f"{name:>8}: {len(path.cells):3d} nodes, length {m['length']:.2f} m, "
          f"turning {m['total_turning_angle']:.1f} deg, {m['inflection_count']} inflections, "
          f"{path.expansions} expansions")

# the pruned waypoints become a time-indexed reference with filleted corners
ref = generate_reference(imp.world_points, v_ref=1.0, dt=1 / 30, corner_radius=0.5)
print(f"reference: {len(ref)} samples over {ref.t[-1]:.1f} s, "
      f"peak |omega| {np.abs(ref.inputs[:, 1]).max():.2f} rad/s")

# randomised comparison over 20 reachable, well-separated queries
res = run_planning_benchmark(grid, n_queries=20, seed=0)
print("\nmetric                 baseline   improved")
for metric, b, i in res.table():
    print(f"{metric:<20} {b:10.2f} {i:10.2f}")
