"""Point cloud to goal on the corridor fixture, with and without a crossing pedestrian.

Writes reports under ./demo_out/e2e/.
Run from the repository root:  python3 demos/04_end_to_end.py
"""

from pathlib import Path

from navstack.planner import path_metrics
from navstack.sim.endtoend import corridor_config, plan_stage, run_end_to_end
from navstack.sim.report import emit_report

out = Path("demo_out/e2e")

cfg = corridor_config()
stage = plan_stage(cfg)
m = path_metrics(stage.path)
print(f"cloud of {len(cfg.cloud.points)} points -> {stage.map_grid.width} x {stage.map_grid.height} grid")
print(f"planned {len(stage.path.cells)} waypoints, {m['length']:.1f} m, {m['inflection_count']} turns; "
      f"reference {stage.reference.t[-1]:.1f} s")

for moving in (False, True):
    run = run_end_to_end(corridor_config(moving_obstacle=moving), stage)
    meta = run.meta
    label = "crossing obstacle" if moving else "static world"
    print(f"{label:>17}: success={run.success}, final error {meta['final_error']:.3f} m, "
          f"RMSE {run.rmse:.3f} m, detours {meta['detours']}, ICP updates {meta['icp_updates']}, "
          f"collision ticks {meta['collisions']}")
    emit_report(run, out / ("moving" if moving else "static"))

print(f"reports in {out}/")
