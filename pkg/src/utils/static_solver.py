# src/utils/static_solver.py
"""
Static problem min f0(y, u) s.t. f(y, u) = 0, solved by damped Newton on its
KKT system. The group part of the static solution is never solved for: it is
the trim g0 * exp(t xi(y_bar, u_bar)) generated afterwards.
"""
from __future__ import annotations
import itertools
import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from src.utils.errors import ConvergenceError, EmptyFeasibleSetError, SingularMatrixError
from src.utils.reduced_systems import ReducedOCP

logger = logging.getLogger(__name__)

KKT_TOL = 1e-10
MAX_NEWTON = 100
MIN_STEP = 1e-6
ILL_CONDITIONED = 1e12


@dataclass(frozen=True)
class StaticSolution:
    y_bar: np.ndarray
    u_bar: np.ndarray
    p_bar: np.ndarray       # PMP adjoint for H = <p, f> - f0
    residual_dyn: float
    residual_kkt: float
    iterations: int
    condition: float = float("nan")

    @property
    def converged(self) -> bool:
        return self.residual_dyn < KKT_TOL and self.residual_kkt < KKT_TOL


def _split(ocp: ReducedOCP, z: np.ndarray):
    n, m = ocp.state_dim, ocp.control_dim
    return z[:n], z[n:n + m], z[n + m:]


def kkt_residual(ocp: ReducedOCP, z: np.ndarray) -> np.ndarray:
    """Stationarity of the Lagrangian f0 + lam^T f, followed by feasibility."""
    y, u, lam = _split(ocp, z)
    return np.concatenate([
        ocp.grad_cost_y(y, u) + ocp.jac_dynamics_y(y, u).T @ lam,
        ocp.grad_cost_u(y, u) + ocp.jac_dynamics_u(y, u).T @ lam,
        ocp.dynamics(y, u),
    ])


def _kkt_jacobian(ocp: ReducedOCP, z: np.ndarray, rel_step: float = 1e-6) -> np.ndarray:
    cols = []
    for i in range(z.size):
        h = rel_step * max(1.0, abs(z[i]))
        zp, zm = z.copy(), z.copy()
        zp[i] += h
        zm[i] -= h
        cols.append((kkt_residual(ocp, zp) - kkt_residual(ocp, zm)) / (2.0 * h))
    return np.column_stack(cols)


def _norms(ocp: ReducedOCP, r: np.ndarray) -> Tuple[float, float]:
    n, m = ocp.state_dim, ocp.control_dim
    return float(np.linalg.norm(r[n + m:])), float(np.linalg.norm(r[:n + m]))


def solve_static(ocp: ReducedOCP, guess: Optional[Sequence[np.ndarray]] = None) -> StaticSolution:
    """
    Damped Newton on the (2n+m)-dimensional KKT system.
    guess is (y, u) or (y, u, lam); multipliers start at 0 when omitted.
    Rank-deficient Jacobians (families of static points) fall back to a
    minimum-norm least-squares step.
    """
    n, m = ocp.state_dim, ocp.control_dim
    if guess is None:
        guess = (ocp.y_guess, ocp.u_guess)
    y, u = np.asarray(guess[0], dtype=float), np.asarray(guess[1], dtype=float)
    lam = np.asarray(guess[2], dtype=float) if len(guess) > 2 else np.zeros(n)
    z = np.concatenate([y, u, lam])
    if not np.all(np.isfinite(z)):
        raise ValueError("static guess must be finite")

    r = kkt_residual(ocp, z)
    cond = float("nan")
    for it in range(MAX_NEWTON + 1):
        res_dyn, res_kkt = _norms(ocp, r)
        logger.debug("static Newton it=%d |f|=%.3e |grad L|=%.3e", it, res_dyn, res_kkt)
        if res_dyn < KKT_TOL and res_kkt < KKT_TOL:
            y, u, lam = _split(ocp, z)
            logger.info("static solution for %s after %d Newton iterations", ocp.name, it)
            return StaticSolution(y.copy(), u.copy(), -lam.copy(), res_dyn, res_kkt, it, cond)
        if it == MAX_NEWTON:
            break

        J = _kkt_jacobian(ocp, z)
        cond = float(np.linalg.cond(J))
        if not np.isfinite(cond) or cond > ILL_CONDITIONED:
            logger.warning("KKT Jacobian ill-conditioned (cond=%.3e), using least-squares step", cond)
            step = np.linalg.lstsq(J, -r, rcond=None)[0]
        else:
            step = np.linalg.solve(J, -r)

        # backtracking on the KKT residual norm
        alpha, r_norm = 1.0, float(np.linalg.norm(r))
        while True:
            z_trial = z + alpha * step
            try:
                r_trial = kkt_residual(ocp, z_trial)
                accepted = np.all(np.isfinite(r_trial)) and np.linalg.norm(r_trial) < r_norm
            except ArithmeticError:
                accepted = False
            if accepted:
                z, r = z_trial, r_trial
                break
            alpha *= 0.5
            if alpha < MIN_STEP:
                if cond > ILL_CONDITIONED:
                    raise SingularMatrixError("singular KKT Jacobian, no descent step", cond)
                raise ConvergenceError(
                    f"static Newton line search failed at iteration {it}",
                    {"residual_dyn": res_dyn, "residual_kkt": res_kkt},
                )

    res_dyn, res_kkt = _norms(ocp, r)
    raise ConvergenceError(
        f"static Newton did not converge in {MAX_NEWTON} iterations",
        {"residual_dyn": res_dyn, "residual_kkt": res_kkt},
    )


def hamiltonian_gradients(ocp: ReducedOCP, sol: StaticSolution) -> Tuple[np.ndarray, np.ndarray]:
    """(grad_y H, grad_u H) at the static point with H = <p, f> - f0."""
    y, u, p = sol.y_bar, sol.u_bar, sol.p_bar
    grad_y = ocp.jac_dynamics_y(y, u).T @ p - ocp.grad_cost_y(y, u)
    grad_u = ocp.jac_dynamics_u(y, u).T @ p - ocp.grad_cost_u(y, u)
    return grad_y, grad_u


def _dynamics_or_nan(ocp: ReducedOCP, Y: np.ndarray, U: np.ndarray) -> np.ndarray:
    """Batched dynamics; columns outside the domain come back as NaN (bisects on ArithmeticError)."""
    try:
        return ocp.dynamics(Y, U)
    except ArithmeticError:
        K = Y.shape[1]
        if K == 1:
            return np.full((ocp.state_dim, 1), np.nan)
        mid = K // 2
        return np.hstack([
            _dynamics_or_nan(ocp, Y[:, :mid], U[:, :mid]),
            _dynamics_or_nan(ocp, Y[:, mid:], U[:, mid:]),
        ])


def static_bruteforce_oracle(
    ocp: ReducedOCP,
    box: Sequence[Tuple[float, float]],
    grid_pts: int = 11,
    chunk: int = 200_000,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Grid the (y, u) box and return the f0-minimizer among near-feasible points.
    A grid point counts as near-feasible when every |f_i| is within the
    first-order variation of f_i across half a cell, i.e. a zero of f may lie
    inside its cell. Ties resolve to the first point in grid order.
    """
    n, m = ocp.state_dim, ocp.control_dim
    if len(box) != n + m:
        raise ValueError(f"box needs {n + m} intervals, got {len(box)}")
    if grid_pts < 11:
        raise ValueError("brute-force oracle needs at least 11 points per dimension")
    axes = [np.linspace(lo, hi, grid_pts) for lo, hi in box]
    half = np.array([(hi - lo) / (grid_pts - 1) / 2.0 for lo, hi in box])

    best_val, best_z = np.inf, None
    points = itertools.product(*axes)
    while True:
        block = np.array(list(itertools.islice(points, chunk)))
        if block.size == 0:
            break
        Z = block.T
        Y, U = Z[:n], Z[n:]
        with np.errstate(divide="ignore", invalid="ignore"):
            F = _dynamics_or_nan(ocp, Y, U)
            slack = np.zeros_like(F)
            for j in range(n + m):
                Zj = Z.copy()
                Zj[j] += half[j]
                slack += np.abs(_dynamics_or_nan(ocp, Zj[:n], Zj[n:]) - F)
            feasible = np.all(np.abs(F) <= slack, axis=0)
            if not np.any(feasible):
                continue
            values = np.full(Z.shape[1], np.inf)
            values[feasible] = ocp.cost(Y[:, feasible], U[:, feasible])
        idx = int(np.argmin(values))
        if values[idx] < best_val:
            best_val, best_z = values[idx], Z[:, idx].copy()

    if best_z is None:
        raise EmptyFeasibleSetError(f"no near-feasible grid point for {ocp.name} in box {list(box)}")
    return best_z[:n], best_z[n:]
