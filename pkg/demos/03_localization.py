"""Dual-layer localisation: a fast local EKF plus slow scan-to-map ICP corrections.

Run from the repository root:  python3 demos/03_localization.py
"""

import math

import numpy as np

from navstack.estimation import EkfState, LocalEstimator, MapCorrection, compose_map_pose, correction_filter, \
    icp_scan_to_map
from navstack.se2 import Pose2, compose, inverse
from navstack.sim.plant import BicycleState
from navstack.sim.sensors import SensorConfig, SensorSuite
from navstack.sim.worlds import structured_room

room = structured_room()
grid = room.grid()
truth = Pose2(4.0, 3.5, 0.4)

# a single scan from the true pose, matched from a deliberately wrong guess
suite = SensorSuite(SensorConfig.noiseless(), seed=0, wheelbase=0.5)
scan = suite.laser(BicycleState(truth, 0.0, 0.0), grid)
guess = compose(truth, Pose2(0.2, 0.1, math.radians(5)))
corr = icp_scan_to_map(scan, grid, guess)
print(f"{len(scan)} beams; guess off by 0.22 m / 5 deg")
print(f"ICP pose ({corr.pose.x:.3f}, {corr.pose.y:.3f}, {math.degrees(corr.pose.theta):.2f} deg), "
      f"truth ({truth.x}, {truth.y}, {math.degrees(truth.theta):.2f} deg)")
print("RMS residual per iteration:", np.round(corr.residuals, 4))

# the local filter lives in a drifting odom frame; T_ML maps it into the map
ekf = LocalEstimator(EkfState.initial(Pose2(0.0, 0.0, 0.0)))
local_pose = ekf.state.pose
raw = MapCorrection(compose(corr.pose, inverse(local_pose)), 0.5, corr.fitness, corr.pose)
prev = MapCorrection(Pose2(), 0.0, 0.0)
for alpha in (0.25, 1.0):
    filt = correction_filter(prev, raw, alpha=alpha)
    p = compose_map_pose(filt, ekf.state)
    print(f"alpha {alpha:4.2f}: map pose ({p.x:.3f}, {p.y:.3f}, {math.degrees(p.theta):.2f} deg)")

bad = MapCorrection(raw.T_ML, 1.0, fitness=0.8)
print("poor fit rejected:", correction_filter(prev, bad) is prev)
