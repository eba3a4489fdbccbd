"""Closed-loop tracking: Euclidean-error MPC vs the SE(2) error-state controller.

Writes per-run reports under ./demo_out/tracking/.
Run from the repository root:  python3 demos/02_tracking.py
"""

from pathlib import Path

from navstack.sim.report import emit_report
from navstack.sim.tracking import ScenarioConfig, run_tracking_experiment

out = Path("demo_out/tracking")

print("trajectory   controller   RMSE (m)   mean solve (ms)   p95 (ms)")
for trajectory in ("lemniscate", "square"):
    for controller in ("mpc", "agmpc"):
        log = run_tracking_experiment(ScenarioConfig(trajectory=trajectory, controller=controller, seed=0))
        stats = log.solve_stats()
        print(f"{trajectory:<12} {controller:<12} {log.rmse:8.4f} {stats['mean']:14.2f} {stats['p95']:11.2f}")
        emit_report(log, out / f"{trajectory}_{controller}")

# faster laps hurt both controllers; the ordering should hold at every speed
print("\nsquare, speed sweep")
for v in (0.6, 1.1, 1.5):
    rmse = {c: run_tracking_experiment(ScenarioConfig(trajectory="square", controller=c, v_ref=v)).rmse
            for c in ("mpc", "agmpc")}
    print(f"  {v:.1f} m/s: MPC {rmse['mpc']:.4f}  A-GMPC {rmse['agmpc']:.4f}")

print(f"\nreports in {out}/ (run.csv, summary.csv, trajectory.svg, solver_time.svg)")
