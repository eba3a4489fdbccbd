"""Box-constrained convex QP solver.

Solves ``min 0.5 z'Hz + g'z  s.t.  lower <= z <= upper`` by accelerated
projected gradient (FISTA with adaptive restart).  Every few iterations a
Newton step restricted to the current free set is tried; when the active set
has been identified this finishes the solve exactly.  Convergence is certified
by the projected-gradient residual ``||z - clip(z - (Hz + g))||_inf``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class QpNonConvergence(RuntimeError):
    """Raised when the iteration budget runs out before the residual target."""

    def __init__(self, residual: float, iterations: int):
        super().__init__(f"QP did not converge in {iterations} iterations (residual {residual:.3e})")
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class QpProblem:
    hessian: np.ndarray
    gradient: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self) -> None:
        h = np.asarray(self.hessian, dtype=float)
        g = np.asarray(self.gradient, dtype=float).ravel()
        n = g.size
        lo = np.broadcast_to(np.asarray(self.lower, dtype=float), (n,)).copy()
        hi = np.broadcast_to(np.asarray(self.upper, dtype=float), (n,)).copy()
        if h.shape != (n, n):
            raise ValueError(f"hessian shape {h.shape} does not match gradient length {n}")
        if not np.allclose(h, h.T, atol=1e-12, rtol=0.0):
            raise ValueError("hessian is not symmetric")
        if np.any(lo > hi):
            raise ValueError("inconsistent bounds: lower > upper")
        object.__setattr__(self, "hessian", 0.5 * (h + h.T))
        object.__setattr__(self, "gradient", g)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def size(self) -> int:
        return self.gradient.size

    def objective(self, z: np.ndarray) -> float:
        return float(0.5 * z @ self.hessian @ z + self.gradient @ z)

    def project(self, z: np.ndarray) -> np.ndarray:
        return np.clip(z, self.lower, self.upper)

    def residual(self, z: np.ndarray) -> float:
        grad = self.hessian @ z + self.gradient
        return float(np.max(np.abs(z - self.project(z - grad)), initial=0.0))


def _free_set_newton(p: QpProblem, z: np.ndarray) -> np.ndarray | None:
    grad = p.hessian @ z + p.gradient
    at_lo = (z <= p.lower) & (grad >= 0.0)
    at_hi = (z >= p.upper) & (grad <= 0.0)
    free = ~(at_lo | at_hi)
    if not free.any():
        return None
    cand = z.copy()
    cand[at_lo] = p.lower[at_lo]
    cand[at_hi] = p.upper[at_hi]
    h_ff = p.hessian[np.ix_(free, free)]
    rhs = -(p.gradient[free] + p.hessian[np.ix_(free, ~free)] @ cand[~free])
    try:
        cand[free] = np.linalg.solve(h_ff, rhs)
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(cand)):
        return None
    return p.project(cand)


def qp_solve(p: QpProblem, tol: float = 1e-8, max_iter: int = 5000,
             z0: np.ndarray | None = None, polish_every: int = 10) -> np.ndarray:
    """Return the minimizer of the box QP ``p``.

    ``z0`` is an optional warm start; it is projected onto the box first.
    The returned point satisfies the bounds exactly and has residual <= ``tol``.
    """
    n = p.size
    if n == 0:
        return np.zeros(0)
    h, g = p.hessian, p.gradient
    lipschitz = float(np.linalg.eigvalsh(h)[-1])
    if lipschitz <= 0.0:
        # H == 0: linear objective, minimized at a vertex
        z = np.where(g > 0, p.lower, np.where(g < 0, p.upper, p.project(np.zeros(n))))
        if not np.all(np.isfinite(z)):
            raise QpNonConvergence(float("inf"), 0)
        return z
    step = 1.0 / lipschitz

    z = p.project(np.zeros(n) if z0 is None else np.asarray(z0, dtype=float))
    best, best_res = z, p.residual(z)
    if best_res <= tol:
        return z
    polished = _free_set_newton(p, z)
    if polished is not None:
        res = p.residual(polished)
        if res <= tol:
            return polished
        if p.objective(polished) < p.objective(z):
            z = polished

    y, t = z.copy(), 1.0
    f_prev = p.objective(z)
    for it in range(1, max_iter + 1):
        z_new = p.project(y - step * (h @ y + g))
        f_new = p.objective(z_new)
        if f_new > f_prev:
            # adaptive restart: drop momentum and take a plain (monotone) projected-gradient step
            y, t = z.copy(), 1.0
            z_new = p.project(z - step * (h @ z + g))
            f_new = p.objective(z_new)
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = z_new + ((t - 1.0) / t_new) * (z_new - z)
        z, t, f_prev = z_new, t_new, f_new

        if it % polish_every == 0:
            res = p.residual(z)
            if res < best_res:
                best, best_res = z, res
            if res <= tol:
                return z
            polished = _free_set_newton(p, z)
            if polished is not None:
                pres = p.residual(polished)
                if pres <= tol:
                    return polished
                f_pol = p.objective(polished)
                if f_pol < f_prev:
                    z, y, t, f_prev = polished, polished.copy(), 1.0, f_pol
    res = p.residual(z)
    if res <= tol:
        return z
    raise QpNonConvergence(min(res, best_res), max_iter)
