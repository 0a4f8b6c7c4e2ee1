# src/utils/ocp_solver.py
"""
Direct single shooting for the reduced OCP.

The decision variables are the N x m piecewise-constant controls. Gradients
come from a discrete adjoint sweep through every RK4 stage, so they are the
exact derivatives of the discretized objective. Terminal equality constraints
are handled by an augmented Lagrangian whose inner problems go to scipy's
L-BFGS-B.
"""
from __future__ import annotations
import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import scipy.optimize

from src.utils.errors import ConfigError, DimensionError, DivergedRolloutError, SingularityError
from src.utils.integrator import (
    RK4_FEED,
    RK4_WEIGHTS,
    ControlGrid,
    RolloutCache,
    Trajectory,
    rollout_with_stages,
    stage_eval,
)
from src.utils.reduced_systems import ReducedOCP

logger = logging.getLogger(__name__)

INNER_TOL_START = 1e-3
FAILED_TRIAL_PENALTY = 1e4

STATUS_CONVERGED = "converged"
STATUS_STALLED = "stalled"
STATUS_MAX_ITER = "max_iterations"
STATUS_DIVERGED = "diverged"


@dataclass(frozen=True)
class SolverConfig:
    N: int = 200
    substeps: int = 4
    max_outer: int = 20
    max_inner: int = 500
    inner_grad_tol: float = 1e-7
    constraint_tol: float = 1e-8
    penalty_init: float = 10.0
    penalty_growth: float = 10.0
    memory: int = 20
    init_control: Optional[Tuple[float, ...]] = None
    cold_start: bool = False

    def __post_init__(self):
        for name in ("N", "substeps", "max_outer", "max_inner", "memory"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"solver.{name} must be a positive count, got {getattr(self, name)!r}")
        for name in ("inner_grad_tol", "constraint_tol", "penalty_init"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"solver.{name} must be positive, got {getattr(self, name)!r}")
        if not self.penalty_growth > 1:
            raise ConfigError(f"solver.penalty_growth must exceed 1, got {self.penalty_growth!r}")


@dataclass
class AdjointGradient:
    value: float                 # J + <terminal_weight, y_N>
    gradient: np.ndarray         # N x m
    adjoints: np.ndarray         # (N+1) x n, PMP convention p = -dPhi/dy
    trajectory: Trajectory


@dataclass
class InnerResult:
    x: np.ndarray
    value: float
    gradient: np.ndarray
    iterations: int
    status: str
    history: List[float] = field(default_factory=list)


@dataclass
class SolveResult:
    trajectory: Optional[Trajectory]
    multipliers: np.ndarray
    stationarity: float
    constraint_violation: float
    outer_iterations: int
    inner_iterations: List[int]
    status: str
    penalty: float = float("nan")
    history: Dict[str, list] = field(default_factory=dict)
    message: str = ""

    @property
    def converged(self) -> bool:
        return self.status == STATUS_CONVERGED


# -------------- discrete adjoint --------------

def _terminal_selector(ocp: ReducedOCP) -> np.ndarray:
    if not ocp.fixed_terminal:
        return np.zeros((0, ocp.state_dim))
    return ocp.terminal.selector(ocp.state_dim)


def _interval_maps(ocp: ReducedOCP, grid: ControlGrid, stages: np.ndarray):
    """
    Linearization of every control interval's RK4 map, built for all intervals
    at once from the stored stages. Returns (Psi, Gamma, r, q) such that the
    reverse sweep reads lam_k = Psi_k^T lam_{k+1} + r_k and
    grad_k = Gamma_k^T lam_{k+1} + q_k.
    """
    N, S = stages.shape[:2]
    n, m = ocp.state_dim, ocp.control_dim
    h = grid.dt / S
    b = RK4_WEIGHTS
    points = stages.reshape(-1, n)
    controls = np.repeat(grid.values, S * 4, axis=0)
    A = stage_eval(ocp.jac_dynamics_y, points, controls, (n, n)).reshape(N, S, 4, n, n)
    B = stage_eval(ocp.jac_dynamics_u, points, controls, (n, m)).reshape(N, S, 4, n, m)
    gy = stage_eval(ocp.grad_cost_y, points, controls, (n,)).reshape(N, S, 4, n)
    gu = stage_eval(ocp.grad_cost_u, points, controls, (m,)).reshape(N, S, 4, m)

    # sensitivities of one sub-step: y_next w.r.t. (y, u) and the cost increment w.r.t. (y, u)
    eye = np.eye(n)
    dY = np.broadcast_to(eye, (N, S, n, n))
    dYu = np.zeros((N, S, n, m))
    Phi = np.broadcast_to(eye, (N, S, n, n))
    G = np.zeros((N, S, n, m))
    ly = np.zeros((N, S, n))
    lu = np.zeros((N, S, m))
    for i in range(4):
        ly = ly + h * b[i] * np.einsum("...ji,...j->...i", dY, gy[:, :, i])
        lu = lu + h * b[i] * (np.einsum("...ji,...j->...i", dYu, gy[:, :, i]) + gu[:, :, i])
        dk = A[:, :, i] @ dY
        dku = A[:, :, i] @ dYu + B[:, :, i]
        Phi = Phi + h * b[i] * dk
        G = G + h * b[i] * dku
        if i < 3:
            dY = eye + RK4_FEED[i] * h * dk
            dYu = RK4_FEED[i] * h * dku

    # chain the sub-steps of each interval, last one first
    Psi = np.broadcast_to(eye, (N, n, n))
    Gamma = np.zeros((N, n, m))
    r = np.zeros((N, n))
    q = np.zeros((N, m))
    for j in range(S - 1, -1, -1):
        Gamma = Gamma + Psi @ G[:, j]
        q = q + np.einsum("kji,kj->ki", G[:, j], r) + lu[:, j]
        r = np.einsum("kji,kj->ki", Phi[:, j], r) + ly[:, j]
        Psi = Psi @ Phi[:, j]
    return Psi, Gamma, r, q


def adjoint_gradient(
    ocp: ReducedOCP,
    grid: ControlGrid,
    terminal_weight: Optional[np.ndarray] = None,
    substeps: int = 4,
    cache: Optional[RolloutCache] = None,
) -> AdjointGradient:
    """
    Gradient of Phi(U) = J(U) + <terminal_weight, y_N> by a reverse sweep
    through the stored RK4 stages. Also returns the discrete adjoint sequence
    at the nodes in the PMP sign convention.
    """
    n, m = ocp.state_dim, ocp.control_dim
    w = np.zeros(n) if terminal_weight is None else np.asarray(terminal_weight, dtype=float)
    if w.shape != (n,):
        raise DimensionError(f"terminal weight must have shape ({n},), got {w.shape}")
    if cache is None:
        cache = rollout_with_stages(ocp, grid, substeps)
    traj, stages = cache.trajectory, cache.stages
    if stages is None or stages.shape != (grid.N, traj.substeps, 4, n):
        raise DimensionError("stored RK4 stages do not match the control grid")

    Psi, Gamma, r, q = _interval_maps(ocp, grid, stages)
    lam = w.copy()
    lam_nodes = np.empty((grid.N + 1, n))
    lam_nodes[-1] = lam
    grad = np.empty((grid.N, m))
    for k in range(grid.N - 1, -1, -1):
        grad[k] = Gamma[k].T @ lam + q[k]
        lam = Psi[k].T @ lam + r[k]
        lam_nodes[k] = lam

    value = traj.cost + float(w @ traj.states[-1])
    return AdjointGradient(value=value, gradient=grad, adjoints=-lam_nodes, trajectory=traj)


# -------------- limited-memory BFGS --------------

class _NoDescent(Exception):
    pass


def _inf_norm(g: np.ndarray) -> float:
    return float(np.max(np.abs(g))) if g.size else 0.0


def lbfgs(
    fun: Callable[[np.ndarray], Tuple[float, np.ndarray]],
    x0: np.ndarray,
    max_iter: int = 500,
    gtol: float = 1e-7,
    memory: int = 20,
) -> InnerResult:
    """
    Minimize fun (returning value and gradient) from x0 with scipy's L-BFGS-B
    and no bounds. A trial point whose evaluation raises SingularityError or
    DivergedRolloutError gets a penalized value so the line search backs off.
    Every accepted iterate is checked for descent; one that does not lower
    the value ends the solve as stalled at the previous iterate.
    """
    x0 = np.asarray(x0, dtype=float).copy()
    f0, g0 = fun(x0)
    best = {"x": x0, "f": float(f0), "g": np.asarray(g0, dtype=float)}
    last = dict(best)
    history = [best["f"]]
    if _inf_norm(best["g"]) < gtol:
        return InnerResult(x0, best["f"], best["g"], 0, STATUS_CONVERGED, history)

    def evaluate(x: np.ndarray) -> Tuple[float, np.ndarray]:
        x = np.array(x, dtype=float)
        try:
            f, g = fun(x)
        except (SingularityError, DivergedRolloutError) as exc:
            logger.debug("trial point rejected: %s", exc)
            f, g = np.nan, None
        if not np.isfinite(f):
            return best["f"] + FAILED_TRIAL_PENALTY * (1.0 + abs(best["f"])), np.zeros_like(x)
        last.update(x=x, f=float(f), g=np.asarray(g, dtype=float))
        return last["f"], last["g"]

    def accept(xk: np.ndarray) -> None:
        if np.array_equal(xk, last["x"]):
            f, g = last["f"], last["g"]
        else:
            f, g = evaluate(xk)
        if not f < best["f"]:
            raise _NoDescent(f)
        best.update(x=np.array(xk, dtype=float), f=f, g=g)
        history.append(f)
        logger.debug("inner it=%d f=%.12e |g|=%.3e", len(history) - 1, f, _inf_norm(g))

    options = {"maxiter": max_iter, "maxfun": 20 * max_iter, "maxcor": memory, "gtol": gtol, "ftol": 0.0}
    try:
        res = scipy.optimize.minimize(evaluate, x0, jac=True, method="L-BFGS-B", callback=accept, options=options)
    except _NoDescent as exc:
        logger.debug("accepted iterate did not descend (f=%s), stopping", exc)
        return InnerResult(best["x"], best["f"], best["g"], len(history) - 1, STATUS_STALLED, history)

    iterations = len(history) - 1
    if _inf_norm(best["g"]) < gtol:
        status = STATUS_CONVERGED
    elif res.status == 1 or iterations >= max_iter:
        status = STATUS_MAX_ITER
    else:
        status = STATUS_STALLED
        logger.debug("L-BFGS-B stopped without reaching the gradient tolerance: %s", res.message)
    return InnerResult(best["x"], best["f"], best["g"], iterations, status, history)


# -------------- augmented Lagrangian --------------

def initial_controls(ocp: ReducedOCP, config: SolverConfig, u_bar: Optional[np.ndarray] = None) -> ControlGrid:
    if config.init_control is not None:
        u0 = np.asarray(config.init_control, dtype=float)
    elif config.cold_start:
        u0 = np.zeros(ocp.control_dim)
    elif u_bar is not None:
        u0 = np.asarray(u_bar, dtype=float)
    else:
        u0 = ocp.u_guess
    if u0.shape != (ocp.control_dim,):
        raise DimensionError(f"initial control must have {ocp.control_dim} entries, got {u0.shape}")
    return ControlGrid.constant(u0, config.N, ocp.horizon)


def solve(ocp: ReducedOCP, config: SolverConfig = SolverConfig(), u_bar: Optional[np.ndarray] = None) -> SolveResult:
    """
    Minimize J subject to the terminal condition by the augmented Lagrangian
    L_A = J + lam^T c + rho/2 |c|^2. Free-terminal problems get a single
    unconstrained inner solve. u_bar (usually the static control) is the warm
    start unless the config asks for an explicit or cold start.

    Inner tolerances start loose and tighten by 10x per outer iteration down to
    inner_grad_tol. rho grows when |c| failed to drop by 10x, unless the
    terminal condition already holds and |c| did not rise.
    """
    grid0 = initial_controls(ocp, config, u_bar)
    N, m = grid0.N, ocp.control_dim
    S = _terminal_selector(ocp)
    n_con = S.shape[0]
    lam = np.zeros(n_con)
    rho = config.penalty_init if n_con else 0.0
    history: Dict[str, list] = {"objective": [], "constraint": [], "penalty": [], "inner_status": []}

    def residual(traj: Trajectory) -> np.ndarray:
        return ocp.terminal.residual(traj.states[-1]) if n_con else np.zeros(0)

    def augmented(x: np.ndarray) -> Tuple[float, np.ndarray]:
        grid = ControlGrid(x.reshape(N, m), ocp.horizon)
        cache = rollout_with_stages(ocp, grid, config.substeps)
        c = residual(cache.trajectory)
        weight = S.T @ (lam + rho * c) if n_con else None
        ag = adjoint_gradient(ocp, grid, weight, config.substeps, cache)
        value = cache.trajectory.cost + float(lam @ c) + 0.5 * rho * float(c @ c)
        return value, ag.gradient.ravel()

    try:
        rollout_with_stages(ocp, grid0, config.substeps, keep_stages=False)
    except (DivergedRolloutError, SingularityError) as exc:
        logger.error("initial rollout failed for %s: %s", ocp.name, exc)
        return SolveResult(None, lam, float("inf"), float("inf"), 0, [], STATUS_DIVERGED, rho, history, str(exc))

    x = grid0.values.ravel().copy()
    inner_iterations: List[int] = []
    status, inner = STATUS_MAX_ITER, None
    c_norm_prev = np.inf
    multipliers = lam
    outer_limit = config.max_outer if n_con else 1

    for outer in range(outer_limit):
        inner_tol = config.inner_grad_tol
        if n_con:
            inner_tol = max(inner_tol, INNER_TOL_START * 0.1 ** outer)
        inner = lbfgs(augmented, x, config.max_inner, inner_tol, config.memory)
        x = inner.x
        inner_iterations.append(inner.iterations)
        history["objective"].append(inner.history)
        history["inner_status"].append(inner.status)

        traj = rollout_with_stages(ocp, ControlGrid(x.reshape(N, m), ocp.horizon), config.substeps, keep_stages=False).trajectory
        c = residual(traj)
        c_norm = _inf_norm(c)
        stationarity = _inf_norm(inner.gradient)
        history["constraint"].append(c_norm)
        history["penalty"].append(rho)
        logger.info(
            "%s outer %d: J=%.10e |c|=%.3e |grad L_A|=%.3e rho=%.1e inner=%d (%s)",
            ocp.name, outer, traj.cost, c_norm, stationarity, rho, inner.iterations, inner.status,
        )

        # first-order multiplier estimate of the plain Lagrangian J + mu^T c
        multipliers = lam + rho * c
        feasible = c_norm < config.constraint_tol
        if feasible and stationarity < config.inner_grad_tol:
            status = STATUS_CONVERGED
            break
        if not n_con:
            status = inner.status
            break
        if feasible and inner.status == STATUS_STALLED:
            status = STATUS_STALLED
            break
        lam = multipliers
        if c_norm > 0.1 * c_norm_prev and (not feasible or c_norm > 1.01 * c_norm_prev):
            rho *= config.penalty_growth
        c_norm_prev = c_norm
    else:
        status = STATUS_STALLED if inner is not None and inner.status == STATUS_STALLED else STATUS_MAX_ITER

    grid = ControlGrid(x.reshape(N, m), ocp.horizon)
    ag = adjoint_gradient(ocp, grid, S.T @ multipliers if n_con else None, config.substeps)
    traj = replace(ag.trajectory, adjoints=ag.adjoints)
    c_final = residual(traj)

    result = SolveResult(
        trajectory=traj,
        multipliers=multipliers,
        stationarity=_inf_norm(inner.gradient),
        constraint_violation=_inf_norm(c_final),
        outer_iterations=len(inner_iterations),
        inner_iterations=inner_iterations,
        status=status,
        penalty=rho,
        history=history,
    )
    if status != STATUS_CONVERGED:
        result.message = f"solver ended with status {status} after {result.outer_iterations} outer iterations"
        logger.warning(result.message)
    return result


# -------------- PMP stationarity --------------

def pmp_residual(ocp: ReducedOCP, result: SolveResult, substeps: Optional[int] = None) -> float:
    """
    max_k |grad_u H| on the grid, with H = <p, f> - f0 averaged over the RK4
    stages of interval k. This is the discrete stationarity condition; it is
    computed from the control gradient of J + mu^T c with the final multipliers.
    """
    traj = result.trajectory
    if traj is None:
        raise ValueError("result carries no trajectory")
    if not result.converged:
        logger.warning("pmp_residual evaluated on a run with status %s", result.status)
    S = _terminal_selector(ocp)
    weight = S.T @ result.multipliers if S.shape[0] else None
    grid = ControlGrid(traj.controls, traj.horizon)
    ag = adjoint_gradient(ocp, grid, weight, substeps or traj.substeps)
    return float(np.max(np.linalg.norm(ag.gradient, axis=1)) / grid.dt)
