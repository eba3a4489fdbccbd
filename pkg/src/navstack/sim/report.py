"""Post-hoc report files for a run: CSV tables and two SVG plots."""

from __future__ import annotations

import csv
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np

from navstack.estimation import write_estimation_log
from navstack.sim.runlog import RECORD_FIELDS, RunLog

REALTIME_BUDGET_MS = 1000.0 / 30.0
RMSE_NOTE = "spatial RMSE: true position to nearest point of the reference path"


def _fmt(v) -> str:
    return format(float(v), ".9g") if isinstance(v, (int, float, np.floating, np.integer)) and not isinstance(
        v, bool) else str(v)


def write_run_csv(log: RunLog, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RECORD_FIELDS)
        for r in log.records:
            w.writerow([repr(v) for v in r])


def write_summary_csv(log: RunLog, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("key", "value"))
        w.writerow(("rmse_definition", RMSE_NOTE))
        for k, v in log.summary().items():
            w.writerow((k, _fmt(v)))


class _Canvas:
    """Maps data coordinates into a fixed-size SVG viewport."""

    def __init__(self, xs: np.ndarray, ys: np.ndarray, width: int = 640, height: int = 480, pad: int = 40,
                 equal: bool = True):
        x0, x1 = float(np.min(xs)), float(np.max(xs))
        y0, y1 = float(np.min(ys)), float(np.max(ys))
        sx = (width - 2 * pad) / max(x1 - x0, 1e-9)
        sy = (height - 2 * pad) / max(y1 - y0, 1e-9)
        if equal:
            sx = sy = min(sx, sy)
        self.x0, self.y0, self.sx, self.sy = x0, y0, sx, sy
        self.height, self.pad = height, pad
        self.root = ET.Element("svg", xmlns="http://www.w3.org/2000/svg", width=str(width), height=str(height),
                               viewBox=f"0 0 {width} {height}")
        ET.SubElement(self.root, "rect", width="100%", height="100%", fill="white")

    def xy(self, x, y) -> tuple[float, float]:
        return self.pad + (x - self.x0) * self.sx, self.height - self.pad - (y - self.y0) * self.sy

    def polyline(self, xs, ys, ident: str, color: str, width: float = 1.5, dash: str | None = None) -> None:
        pts = " ".join(f"{px:.2f},{py:.2f}" for px, py in (self.xy(x, y) for x, y in zip(xs, ys)))
        attrs = {"id": ident, "points": pts, "fill": "none", "stroke": color, "stroke-width": str(width)}
        if dash:
            attrs["stroke-dasharray"] = dash
        ET.SubElement(self.root, "polyline", attrs)

    def text(self, x: float, y: float, s: str, size: int = 12) -> None:
        el = ET.SubElement(self.root, "text", x=f"{x:.1f}", y=f"{y:.1f}", attrib={"font-size": str(size)})
        el.text = s

    def write(self, path: Path) -> None:
        ET.ElementTree(self.root).write(path, encoding="utf-8", xml_declaration=True)


def trajectory_svg(log: RunLog, path: Path) -> None:
    a = log.array
    ref = log.reference_path if log.reference_path is not None else a[:, 7:9]
    if log.closed_path:
        ref = np.vstack([ref, ref[:1]])
    xs = np.concatenate([ref[:, 0], a[:, 1]])
    ys = np.concatenate([ref[:, 1], a[:, 2]])
    c = _Canvas(xs, ys)
    c.polyline(ref[:, 0], ref[:, 1], "reference", "#888888", 2.0, "6,4")
    c.polyline(a[:, 1], a[:, 2], "actual", "#d62728", 1.5)
    c.text(10, 18, f"reference (dashed) vs actual; RMSE {log.rmse:.4f} m ({RMSE_NOTE})", 11)
    c.write(path)


def solver_time_svg(log: RunLog, path: Path) -> None:
    t = log.column("t")
    ms = log.column("solve_ms")
    top = max(float(ms.max()), REALTIME_BUDGET_MS) * 1.1
    c = _Canvas(np.array([t.min(), t.max()]), np.array([0.0, top]), equal=False)
    c.polyline(t, ms, "solve_time", "#1f77b4", 1.0)
    c.polyline([t.min(), t.max()], [REALTIME_BUDGET_MS] * 2, "budget", "#d62728", 1.5, "4,3")
    st = log.solve_stats()
    c.text(10, 18, f"solver time per tick (ms); mean {st['mean']:.2f}, p95 {st['p95']:.2f}, "
                   f"max {st['max']:.2f}; dashed line = 33.3 ms budget", 11)
    c.write(path)


def emit_report(log: RunLog, out_dir) -> list[Path]:
    """Write ``run.csv``, ``summary.csv``, ``trajectory.svg`` and ``solver_time.svg``.

    ``estimation.csv`` is added when the log carries estimator rows.
    """
    if len(log) == 0:
        raise ValueError("cannot report an empty run log")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = [out / "run.csv", out / "summary.csv", out / "trajectory.svg", out / "solver_time.svg"]
    write_run_csv(log, files[0])
    write_summary_csv(log, files[1])
    trajectory_svg(log, files[2])
    solver_time_svg(log, files[3])
    if log.estimation:
        files.append(out / "estimation.csv")
        write_estimation_log(log.estimation, files[-1])
    return files
