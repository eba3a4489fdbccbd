"""Independent reference implementations shared by the unit and acceptance tests."""

import itertools
import math

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from navstack.control import to_ackermann
from navstack.estimation import EkfState, LocalEstimator
from navstack.grid import OCCUPIED, CellIndex, OccupancyGrid
from navstack.qp import QpProblem
from navstack.se2 import Pose2, wrap_angle
from navstack.sim.plant import BicycleState, step_bicycle
from navstack.sim.references import lemniscate_ref
from navstack.sim.sensors import SensorConfig, SensorSuite


STEPS = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)]


def legal_moves(blocked, c, r):
    h, w = blocked.shape
    for d, (dc, dr) in enumerate(STEPS):
        nc, nr = c + dc, r + dr
        if not (0 <= nc < w and 0 <= nr < h) or blocked[nr, nc]:
            continue
        if dc and dr and (blocked[r, nc] or blocked[nr, c]):
            continue
        yield d, nc, nr, math.hypot(dc, dr)


def oracle_cost(grid: OccupancyGrid, start, goal, turn: float) -> float:
    """Dijkstra over (cell, incoming direction); direction slot 8 marks the start."""
    blocked = grid.blocked
    h, w = blocked.shape
    p = grid.resolution

    def node(c, r, d):
        return (r * w + c) * 9 + d

    rows, cols, vals = [], [], []
    for r in range(h):
        for c in range(w):
            if blocked[r, c]:
                continue
            for d_in in range(9):
                for d, nc, nr, step in legal_moves(blocked, c, r):
                    extra = turn if d_in < 8 and d != d_in else 0.0
                    rows.append(node(c, r, d_in))
                    cols.append(node(nc, nr, d))
                    vals.append(step * p + extra)
    n = h * w * 9
    graph = csr_matrix((vals, (rows, cols)), shape=(n, n))
    dist = dijkstra(graph, indices=node(*start, 8))
    base = node(*goal, 0)
    return float(min(dist[base: base + 9]))


def random_layout(rng, w, h, density) -> OccupancyGrid:
    cells = (rng.random((h, w)) < density).astype(np.uint8) * OCCUPIED
    return OccupancyGrid.from_array(cells, 0.25)


def free_pair(rng, g: OccupancyGrid):
    free = np.argwhere(~g.blocked)
    i, j = rng.choice(len(free), 2, replace=False)
    return CellIndex(int(free[i][1]), int(free[i][0])), CellIndex(int(free[j][1]), int(free[j][0]))


def active_set_oracle(p: QpProblem) -> np.ndarray:
    """Enumerate every lower/free/upper assignment and keep the best feasible stationary point.

    For each free set the fixed variables take all 2^k bound combinations at
    once; the free block is solved from one factorization.
    """
    n = p.size
    h, g = p.hessian, p.gradient
    best, best_f = None, np.inf
    for free_bits in itertools.product((False, True), repeat=n):
        free = np.array(free_bits)
        fixed = ~free
        k = int(fixed.sum())
        combos = np.array(list(itertools.product((0, 1), repeat=k)), dtype=bool).reshape(2**k, k)
        z = np.zeros((len(combos), n))
        z[:, fixed] = np.where(combos, p.upper[fixed], p.lower[fixed])
        if free.any():
            h_ff = h[np.ix_(free, free)]
            rhs = -(g[free][None, :] + z[:, fixed] @ h[np.ix_(free, fixed)].T)
            z[:, free] = np.linalg.solve(h_ff, rhs.T).T
        ok = np.all((z >= p.lower - 1e-12) & (z <= p.upper + 1e-12), axis=1)
        if not ok.any():
            continue
        zs = z[ok]
        f = 0.5 * np.einsum("ij,jk,ik->i", zs, h, zs) + zs @ g
        i = int(np.argmin(f))
        if f[i] < best_f:
            best, best_f = zs[i], float(f[i])
    return best


def random_problem(rng, n: int) -> QpProblem:
    a = rng.normal(size=(n, n))
    h = a @ a.T + 0.1 * np.eye(n)
    g = rng.normal(size=n) * 3
    lo = rng.uniform(-2, 0, n)
    hi = lo + rng.uniform(0.2, 2, n)
    return QpProblem(h, g, lo, hi)


GRID_STEP = 0.01


def agmpc_rollout_cost(xi0, u_prev, u_ref, u_tilde, cfg) -> float:
    """Stage cost summed along a direct simulation of the Euler error dynamics."""
    q, r, rd = cfg.Q, cfg.R, cfg.R_delta
    xi = np.asarray(xi0, float)
    cost = xi @ q @ xi
    prev = np.asarray(u_prev, float)
    for (v, w), ut in zip(u_ref, u_tilde):
        a_c = np.array([[0, w, 0], [-w, 0, v], [0, 0, 0]], float)
        b_c = np.array([[1, 0], [0, 0], [0, 1]], float)
        du = ut - prev
        cost += ut @ r @ ut + du @ rd @ du
        xi = xi + cfg.dt * (a_c @ xi + b_c @ ut)
        cost += xi @ q @ xi
        prev = ut
    return float(cost)


def baseline_rollout_cost(pose, refs, u_tilde, cfg) -> float:
    q, r = cfg.Q, cfg.R
    (p0, _) = refs[0]
    e = np.array([pose.x - p0.x, pose.y - p0.y, wrap_angle(pose.theta - p0.theta)])
    cost = e @ q @ e
    for (pr, (v, _)), ut in zip(refs, u_tilde):
        c, s = math.cos(pr.theta), math.sin(pr.theta)
        e = e + cfg.dt * np.array([c * ut[0] - v * s * e[2], s * ut[0] + v * c * e[2], ut[1]])
        cost += ut @ r @ ut + e @ q @ e
    return float(cost)


def quadratic_coeffs(f, n):
    """Recover (H, g, c) of an exact quadratic ``f`` by polarization."""
    c = f(np.zeros(n))
    eye = np.eye(n)
    fp = np.array([f(eye[i]) for i in range(n)])
    fm = np.array([f(-eye[i]) for i in range(n)])
    g = 0.5 * (fp - fm)
    h = np.diag(fp + fm - 2 * c)
    for i in range(n):
        for j in range(i + 1, n):
            h[i, j] = h[j, i] = f(eye[i] + eye[j]) - fp[i] - fp[j] + c
    return h, g, c


def lattice_minimum(h, g, c, lo, hi, t_map, u0):
    """Exact minimum of ``0.5 z'Hz + g'z + c`` over the step-0.01 lattice of [-1, 1]^n.

    Feasibility is ``lo <= T z + u0 <= hi`` with ``T`` unit lower triangular.
    All leading coordinates are enumerated; the last one is minimized exactly
    over its lattice: for a convex 1-D quadratic the best lattice point is one
    of the two that bracket the clipped continuous minimizer.  The result equals
    exhaustive enumeration of every lattice point.
    """
    n = len(g)
    axis = np.round(np.arange(-1.0, 1.0 + 1e-9, GRID_STEP), 10)
    m = len(axis)
    lead = np.stack(np.meshgrid(*([axis] * (n - 1)), indexing="ij"), -1).reshape(-1, n - 1)
    best = np.inf
    for ys in np.array_split(lead, max(1, len(lead) // 50_000)):
        u_lead = ys @ t_map[:-1, :-1].T + u0[:-1]
        ok = np.all((u_lead >= lo[:-1] - 1e-12) & (u_lead <= hi[:-1] + 1e-12), axis=1)
        ys = ys[ok]
        if not len(ys):
            continue
        shift = ys @ t_map[-1, :-1] + u0[-1]
        k_lo = np.ceil((np.maximum(lo[-1] - shift, -1.0) + 1.0) / GRID_STEP - 1e-6)
        k_hi = np.floor((np.minimum(hi[-1] - shift, 1.0) + 1.0) / GRID_STEP + 1e-6)
        feas = k_lo <= k_hi
        lin = g[-1] + ys @ h[-1, :-1]
        x_star = -lin / h[-1, -1]
        k1 = np.clip(np.floor((x_star + 1.0) / GRID_STEP), k_lo, k_hi)
        rest = 0.5 * np.einsum("ij,jk,ik->i", ys, h[:-1, :-1], ys) + ys @ g[:-1] + c
        for k in (k1, np.clip(k1 + 1, k_lo, k_hi)):
            x = axis[np.clip(k, 0, m - 1).astype(int)]
            val = rest + lin * x + 0.5 * h[-1, -1] * x * x
            best = min(best, float(np.where(feas, val, np.inf).min(initial=np.inf)))
    return best


# tiny-horizon controller fixtures: (horizon, xi0, u~_-1, u_ref per step)
AGMPC_FIXTURES = [
    (1, (0.1, -0.2, 0.2), (0.0, 0.0), [(1.0, 0.0)]),
    (2, (0.0, 0.0, 0.2), (0.0, 0.0), [(1.0, 0.0), (1.0, 0.0)]),
    (2, (0.3, 0.4, -0.5), (0.1, -0.2), [(0.8, 0.5), (0.8, 0.5)]),
    (2, (-0.5, 1.0, 0.8), (0.0, 0.3), [(0.1, -1.0), (0.1, -1.0)]),
]

# (horizon, current pose, [(reference pose, u_ref)])
BASELINE_FIXTURES = [
    (1, Pose2(0.05, 0.2, 0.1), [(Pose2(), (1.0, 0.0))]),
    (2, Pose2(0.0, 0.3, 0.0), [(Pose2(), (1.0, 0.0)), (Pose2(0.1, 0, 0), (1.0, 0.0))]),
    (2, Pose2(1.1, 0.9, 0.9), [(Pose2(1, 1, 0.6), (0.7, 0.4)), (Pose2(1.05, 1.05, 0.64), (0.7, 0.4))]),
]


def _deviation_box(u_ref, horizon, cfg):
    lo = np.tile([0.0, -cfg.omega_max], horizon) - u_ref.ravel()
    hi = np.tile([cfg.v_max, cfg.omega_max], horizon) - u_ref.ravel()
    return lo, hi


def agmpc_lattice_best(horizon, xi0, u_prev, refs, cfg):
    """Lattice optimum over the increments; u~_k is u~_-1 plus the cumulative increments."""
    u_ref = np.array(refs, dtype=float)
    lo, hi = _deviation_box(u_ref, horizon, cfg)

    def cost_du(du):
        ut = np.cumsum(du.reshape(horizon, 2), axis=0) + np.asarray(u_prev)
        return agmpc_rollout_cost(xi0, u_prev, u_ref, ut, cfg)

    t_map = np.kron(np.tril(np.ones((horizon, horizon))), np.eye(2))
    best = lattice_minimum(*quadratic_coeffs(cost_du, 2 * horizon), lo, hi, t_map, np.tile(u_prev, horizon))
    return best, lo, hi


def baseline_lattice_best(horizon, pose, refs, cfg):
    u_ref = np.array([u for _, u in refs], dtype=float)
    lo, hi = _deviation_box(u_ref, horizon, cfg)
    n = 2 * horizon
    coeffs = quadratic_coeffs(lambda z: baseline_rollout_cost(pose, refs, z.reshape(horizon, 2), cfg), n)
    return lattice_minimum(*coeffs, lo, hi, np.eye(n), np.zeros(n))


def assert_psd(p):
    np.testing.assert_allclose(p, p.T, atol=1e-10)
    np.linalg.cholesky(0.5 * (p + p.T) + 1e-15 * np.eye(len(p)))


def run_lemniscate_estimator(cfg: SensorConfig, duration=60.0, seed=0):
    """Drive the plant along the lemniscate at 100 Hz and fuse synthetic sensors."""
    ref = lemniscate_ref(4.0, 1.0, 0.01)
    suite = SensorSuite(cfg, seed, 0.5)
    truth = BicycleState(ref.pose(0), 1.0, math.atan(ref.inputs[0, 1] * 0.5))
    est = LocalEstimator(EkfState.initial(ref.pose(0)))
    est.state = EkfState(ref.pose(0), 1.0, truth.omega(0.5), est.state.covariance, 0.0)
    worst_pos, worst_th, covs = 0.0, 0.0, []
    for k in range(1, int(round(duration / 0.01)) + 1):
        truth = step_bicycle(truth, to_ackermann(ref.input(k % len(ref)), 0.5, 0.05, 0.7), 0.01, 0.5)
        t = k * 0.01
        est.fuse(suite.wheel_odom(truth, t))
        est.fuse(suite.imu_yaw(truth, t))
        if k % 10 == 0:
            est.fuse(suite.scan_odom(truth, t))
        p = est.state.pose
        worst_pos = max(worst_pos, math.hypot(p.x - truth.pose.x, p.y - truth.pose.y))
        worst_th = max(worst_th, abs(math.remainder(p.theta - truth.pose.theta, 2 * math.pi)))
        covs.append(est.state.covariance)
    return worst_pos, worst_th, covs
