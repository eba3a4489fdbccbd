import csv
import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from navstack.control import AckermannCommand, ControllerConfig
from navstack.grid import OCCUPIED, OccupancyGrid, inflate, save_grid
from navstack.planner import Unreachable
from navstack.se2 import Pose2
from navstack.sim.benchmark import path_is_free, run_planning_benchmark
from navstack.sim.endtoend import corridor_config, plan_stage
from navstack.sim.plant import ActuatorLag, BicycleState, step_bicycle
from navstack.sim.report import emit_report
from navstack.sim.runlog import RECORD_FIELDS, RunLog, spatial_rmse
from navstack.sim.sensors import SensorConfig, SensorSuite, synthesize_sensors
from navstack.sim.tracking import ScenarioConfig, run_tracking_experiment
from navstack.sim.worlds import campus_map
from navstack import cli

NO_LAG = ActuatorLag(0.0, 0.0)


def test_bicycle_rest_and_straight():
    s = BicycleState(Pose2(1.0, 2.0, 0.3), 0.0, 0.0)
    assert step_bicycle(s, AckermannCommand(0.0, 0.0), 0.1, 0.5) == s
    s = BicycleState(Pose2(0, 0, math.pi / 6), 1.0, 0.0)
    out = step_bicycle(s, AckermannCommand(1.0, 0.0), 1.0, 0.5, NO_LAG)
    assert (out.pose.x, out.pose.y) == pytest.approx((math.cos(math.pi / 6), math.sin(math.pi / 6)), abs=1e-15)
    with pytest.raises(ValueError):
        step_bicycle(s, AckermannCommand(1.0, 0.0), 0.0, 0.5)


def test_bicycle_circle_period():
    L, delta, v = 0.5, 0.3, 1.0
    radius = L / math.tan(delta)
    period = 2 * math.pi * radius / v
    n = 600
    s = BicycleState(Pose2(), v, delta)
    for k in range(1, n + 1):
        s = step_bicycle(s, AckermannCommand(v, delta), period / n, L, NO_LAG)
        if k == n // 4:
            # closed-form quarter circle: centre at (0, R)
            assert (s.pose.x, s.pose.y) == pytest.approx((radius, radius), abs=1e-6)
    assert abs(s.pose.x) < 1e-6 and abs(s.pose.y) < 1e-6
    assert abs(math.remainder(s.pose.theta, 2 * math.pi)) < 1e-6


def test_actuator_lag_first_order():
    s = BicycleState(Pose2(), 0.0, 0.0)
    out = step_bicycle(s, AckermannCommand(1.0, 0.4), 0.01, 0.5, ActuatorLag(0.2, 0.1))
    assert out.v_actual == pytest.approx(0.05)
    assert out.delta_actual == pytest.approx(0.04)


@settings(max_examples=50, deadline=None)
@given(st.floats(-3, 3), st.floats(0.001, 0.5), st.floats(0, 0.7))
def test_steering_clamped(delta_cmd, dt, delta_max):
    s = BicycleState(Pose2(), 1.0, 0.0)
    for _ in range(3):
        s = step_bicycle(s, AckermannCommand(1.0, delta_cmd), dt, 0.5, ActuatorLag(0.2, 0.1), delta_max)
        assert abs(s.delta_actual) <= delta_max


def test_noiseless_sensors_equal_truth():
    suite = SensorSuite(SensorConfig.noiseless(), 4, 0.5)
    truth = BicycleState(Pose2(1.0, -2.0, 0.7), 0.8, 0.2)
    scan = suite.scan_odom(truth, 0.1)
    np.testing.assert_array_equal(scan.value, [1.0, -2.0, 0.7])
    wheel = suite.wheel_odom(truth, 0.1)
    np.testing.assert_array_equal(wheel.value, [0.8, truth.omega(0.5)])
    assert suite.imu_yaw(truth, 0.1).value[0] == truth.omega(0.5)


def _history(n=300, dt=0.01):
    s = BicycleState(Pose2(2.0, 2.0, 0.0), 0.5, 0.1)
    out = []
    for k in range(n):
        s = step_bicycle(s, AckermannCommand(0.5, 0.1), dt, 0.5)
        out.append(((k + 1) * dt, s))
    return out


def test_sensor_stream_deterministic_per_seed():
    grid = campus_map()
    hist = _history()
    a = list(synthesize_sensors(hist, SensorConfig(), 7, 0.5, grid))
    b = list(synthesize_sensors(hist, SensorConfig(), 7, 0.5, grid))
    c = list(synthesize_sensors(hist, SensorConfig(), 8, 0.5, grid))

    def flat(stream):
        return [(k, t, np.asarray(getattr(r, "value", getattr(r, "points", None))).tobytes()) for k, t, r in stream]

    assert flat(a) == flat(b)
    assert flat(a) != flat(c)
    kinds = [k for k, _, _ in a]
    # 10 Hz sensors fire on the first sample and then at t = 0.1, ..., 3.0
    assert kinds.count("wheel_odom") == 300 and kinds.count("scan_odom") == 31 and kinds.count("laser") == 31


def test_laser_wall_range():
    cells = np.zeros((40, 40), np.uint8)
    cells[:, 30] = OCCUPIED
    g = OccupancyGrid.from_array(cells, 0.1)
    suite = SensorSuite(SensorConfig.noiseless(n_beams=4), 0, 0.5)
    for x0 in (0.55, 1.02, 2.37):
        scan = suite.laser(BicycleState(Pose2(x0, 2.0, 0.0), 0.0, 0.0), g)
        forward = scan.points[np.argmax(scan.points[:, 0])]
        assert abs(forward[0] - (3.0 - x0)) <= 0.05 + 1e-9


def test_straight_line_tracking_noise_free():
    sc = ScenarioConfig(trajectory="path", waypoints=np.array([[0.0, 0.0], [10.0, 0.0]]), controller="agmpc",
                        sensors=SensorConfig.noiseless(), lag=NO_LAG)
    log = run_tracking_experiment(sc)
    assert log.complete
    assert log.rmse < 0.01


def test_scenario_validation():
    with pytest.raises(ValueError):
        ScenarioConfig(v_ref=3.0)
    with pytest.raises(ValueError):
        ScenarioConfig(duration=0.0)
    with pytest.raises(ValueError):
        ScenarioConfig(trajectory="path")
    with pytest.raises(ValueError):
        ScenarioConfig(controller="pid")


@pytest.mark.parametrize("controller", ["mpc", "agmpc"])
def test_tracking_deterministic_and_no_teleport(controller):
    sc = ScenarioConfig(trajectory="lemniscate", controller=controller, seed=3, duration=4.0)
    a, b = run_tracking_experiment(sc), run_tracking_experiment(sc)
    assert np.array_equal(a.deterministic_view(), b.deterministic_view())
    assert len(a) == 120
    np.testing.assert_allclose(np.diff(a.column("t")), sc.control.dt, atol=1e-12)
    step = np.linalg.norm(np.diff(a.true_positions, axis=0), axis=1)
    assert step.max() <= sc.control.v_max * sc.control.dt + 1e-9


@pytest.mark.parametrize("controller", ["mpc", "agmpc"])
def test_rmse_not_decreased_by_doubling_scan_noise(controller):
    def mean_rmse(sensors):
        return np.mean([run_tracking_experiment(ScenarioConfig(trajectory="square", controller=controller,
                                                               seed=s, sensors=sensors)).rmse
                        for s in range(5)])

    assert mean_rmse(SensorConfig().scaled(2.0)) >= mean_rmse(SensorConfig())


def _sum_du_sq(log: RunLog) -> float:
    u = np.column_stack([log.column("v_cmd"), log.column("omega_cmd")])
    return float(np.sum(np.diff(u, axis=0) ** 2))


@pytest.mark.parametrize("controller,trajectory", [("mpc", "square"), ("agmpc", "square"),
                                                   ("agmpc", "lemniscate")])
def test_heavier_rate_weight_smooths(controller, trajectory):
    base = ControllerConfig()
    heavy = base.with_(rd_v=base.rd_v * 10, rd_w=base.rd_w * 10)
    runs = [run_tracking_experiment(ScenarioConfig(trajectory=trajectory, controller=controller, control=c))
            for c in (base, heavy)]
    assert _sum_du_sq(runs[1]) <= _sum_du_sq(runs[0])


def test_spatial_rmse_examples():
    path = np.array([[0.0, 0.0], [10.0, 0.0]])
    assert spatial_rmse(np.array([[1.0, 0.5], [2.0, -0.5]]), path) == pytest.approx(0.5)
    square = np.array([[0, 0], [1, 0], [1, 1], [0, 1.0]])
    assert spatial_rmse(np.array([[-0.1, 0.5]]), square, closed=True) == pytest.approx(0.1)
    assert spatial_rmse(np.array([[-0.1, 0.5]]), square, closed=False) == pytest.approx(math.hypot(0.1, 0.5))


def test_planning_benchmark_ordering_and_validity():
    grid = campus_map()
    res = run_planning_benchmark(grid, n_queries=8, seed=2)
    m = res.means()
    assert m["improved"]["inflection_count"] < m["baseline"]["inflection_count"]
    assert m["improved"]["total_turning_angle"] < m["baseline"]["total_turning_angle"]
    inflated = inflate(grid, 0.3)
    assert len(res.paths) == 8
    for base, imp in res.paths:
        assert path_is_free(inflated, base) and path_is_free(inflated, imp)


def three_tick_log() -> RunLog:
    log = RunLog(reference_path=np.array([[0.0, 0.0], [1.0, 0.0]]))
    for k in range(3):
        log.append(*[k / 30 + 0.001 * j for j in range(len(RECORD_FIELDS))])
    return log


def test_report_csv_and_svg(tmp_path):
    log = three_tick_log()
    files = emit_report(log, tmp_path)
    assert {f.name for f in files} >= {"run.csv", "summary.csv", "trajectory.svg", "solver_time.svg"}
    with open(tmp_path / "run.csv") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == RECORD_FIELDS
    np.testing.assert_allclose(np.array(rows[1:], float), log.array, rtol=1e-12, atol=0)
    ns = {"svg": "http://www.w3.org/2000/svg"}
    root = ET.parse(tmp_path / "trajectory.svg").getroot()
    ids = {p.get("id") for p in root.iter("{http://www.w3.org/2000/svg}polyline")} | \
          {p.get("id") for p in root.findall(".//polyline")}
    assert {"reference", "actual"} <= ids
    root = ET.parse(tmp_path / "solver_time.svg").getroot()
    assert root.findall(".//svg:polyline", ns) or root.findall(".//polyline")
    with open(tmp_path / "summary.csv") as fh:
        summary = dict(csv.reader(fh))
    assert float(summary["solve_ms_max"]) == pytest.approx(log.column("solve_ms").max())


def test_report_empty_log(tmp_path):
    with pytest.raises(ValueError):
        emit_report(RunLog(), tmp_path)


def test_goal_inside_obstacle_is_unreachable():
    with pytest.raises(Unreachable):
        plan_stage(corridor_config(goal=(8.1, 3.0)))


def test_cli_exit_codes(tmp_path, capsys):
    fx = tmp_path / "fx"
    assert cli.main(["fixtures", "--out", str(fx)]) == 0
    assert cli.main(["plan", "--map", str(fx / "campus.grid"), "--start", "2,2", "--goal", "45,45",
                     "--out", str(tmp_path / "plan")]) == 0
    assert (tmp_path / "plan" / "reference.csv").exists()
    assert cli.main(["plan", "--map", str(fx / "campus.grid"), "--start", "2,2", "--goal", "99,99",
                     "--out", str(tmp_path / "bad")]) == 2
    assert cli.main(["plan", "--map", str(tmp_path / "missing.grid"), "--start", "0,0", "--goal", "1,1",
                     "--out", str(tmp_path / "x")]) == 2
    walled = np.zeros((6, 6), np.uint8)
    walled[:, 3] = OCCUPIED
    save_grid(OccupancyGrid.from_array(walled, 0.25), tmp_path / "walled.grid")
    assert cli.main(["plan", "--map", str(tmp_path / "walled.grid"), "--start", "0,0", "--goal", "5,5",
                     "--out", str(tmp_path / "w")]) == 3
    assert cli.main(["track", "--traj", "circle", "--controller", "mpc", "--out", str(tmp_path / "t")]) == 2
    (tmp_path / "bad.cfg").write_text("horizon = 0\n")
    assert cli.main(["track", "--traj", "square", "--controller", "mpc", "--config", str(tmp_path / "bad.cfg"),
                     "--out", str(tmp_path / "t")]) == 2
    assert cli.main([]) == 2
