# src/utils/integrator.py
from __future__ import annotations
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Tuple

import numpy as np

from src.utils.errors import DimensionError, DivergedRolloutError
from src.utils.lie_groups import GroupElement, group_step
from src.utils.reduced_systems import ReducedOCP

# classical RK4 weights, and the coefficient with which stage i feeds stage i+1
RK4_WEIGHTS = np.array([1.0, 2.0, 2.0, 1.0]) / 6.0
RK4_FEED = (0.5, 0.5, 1.0)


@dataclass(frozen=True)
class ControlGrid:
    """Piecewise-constant controls: values[k] acts on [k dt, (k+1) dt)."""
    values: np.ndarray
    horizon: float

    def __post_init__(self):
        values = np.atleast_2d(np.asarray(self.values, dtype=float))
        object.__setattr__(self, "values", values)
        if values.shape[0] < 1:
            raise DimensionError("control grid needs at least one interval")
        if not self.horizon > 0:
            raise DimensionError(f"horizon must be positive, got {self.horizon!r}")
        if not np.all(np.isfinite(values)):
            raise DimensionError("control grid contains non-finite values")

    @property
    def N(self) -> int:
        return self.values.shape[0]

    @property
    def dt(self) -> float:
        return self.horizon / self.N

    @classmethod
    def constant(cls, u: np.ndarray, N: int, horizon: float) -> "ControlGrid":
        return cls(np.tile(np.asarray(u, dtype=float), (N, 1)), horizon)


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    controls: np.ndarray
    running_cost: np.ndarray
    substeps: int = 1
    adjoints: Optional[np.ndarray] = None
    group: Optional[List[GroupElement]] = None

    @property
    def cost(self) -> float:
        return float(self.running_cost[-1])

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def control_at_nodes(self) -> np.ndarray:
        """Controls sampled at the N+1 nodes (the last interval's value is held at t=T)."""
        return np.vstack([self.controls, self.controls[-1:]])


@dataclass
class RolloutCache:
    """Stage states of every RK4 sub-step, kept for the discrete adjoint sweep."""
    trajectory: Trajectory
    stages: np.ndarray = field(default=None)  # shape (N, substeps, 4, n)


def rk4_step(f, y: np.ndarray, u: np.ndarray, dt: float) -> np.ndarray:
    """Classical RK4 step with u frozen over the four stages."""
    k1 = f(y, u)
    k2 = f(y + 0.5 * dt * k1, u)
    k3 = f(y + 0.5 * dt * k2, u)
    k4 = f(y + dt * k3, u)
    return y + dt * (RK4_WEIGHTS[0] * k1 + RK4_WEIGHTS[1] * k2 + RK4_WEIGHTS[2] * k3 + RK4_WEIGHTS[3] * k4)


def stage_eval(fun: Callable, points: np.ndarray, controls: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """
    Evaluate fun on K (y, u) pairs given as rows and return shape (K,) + shape.
    fun gets column batches; a result that already has the bare shape does not
    depend on the point and is broadcast.
    """
    shape = tuple(shape)
    K = points.shape[0]
    out = np.asarray(fun(points.T, controls.T), dtype=float)
    if out.shape == shape:
        return np.broadcast_to(out, (K,) + shape)
    return np.moveaxis(out, -1, 0).reshape((K,) + shape)


def _stage_states(ocp: ReducedOCP, y: np.ndarray, u: np.ndarray, h: float, stage_out: np.ndarray) -> np.ndarray:
    """One RK4 sub-step of the reduced dynamics; records the four stage states."""
    k1 = ocp.dynamics(y, u)
    Y2 = y + 0.5 * h * k1
    k2 = ocp.dynamics(Y2, u)
    Y3 = y + 0.5 * h * k2
    k3 = ocp.dynamics(Y3, u)
    Y4 = y + h * k3
    k4 = ocp.dynamics(Y4, u)
    stage_out[0], stage_out[1], stage_out[2], stage_out[3] = y, Y2, Y3, Y4
    return y + h * (RK4_WEIGHTS[0] * k1 + RK4_WEIGHTS[1] * k2 + RK4_WEIGHTS[2] * k3 + RK4_WEIGHTS[3] * k4)


def rollout_with_stages(ocp: ReducedOCP, grid: ControlGrid, substeps: int = 4, keep_stages: bool = True) -> RolloutCache:
    """
    RK4 rollout of (y, c) with c_dot = f0(y, u). The state recursion runs
    interval by interval; the cost quadrature is evaluated afterwards on all
    stored stage states at once.
    """
    if substeps < 1:
        raise DimensionError(f"substeps must be >= 1, got {substeps}")
    if grid.values.shape[1] != ocp.control_dim:
        raise DimensionError(f"control grid has {grid.values.shape[1]} columns, {ocp.name} needs {ocp.control_dim}")
    N, n = grid.N, ocp.state_dim
    h = grid.dt / substeps
    states = np.empty((N + 1, n))
    stages = np.empty((N, substeps, 4, n))
    states[0] = ocp.y0
    y = ocp.y0.astype(float)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for k in range(N):
            u = grid.values[k]
            for j in range(substeps):
                y = _stage_states(ocp, y, u, h, stages[k, j])
            if not np.all(np.isfinite(y)):
                raise DivergedRolloutError(k)
            states[k + 1] = y
        controls = np.repeat(grid.values, substeps * 4, axis=0)
        f0 = stage_eval(ocp.cost, stages.reshape(-1, n), controls, ()).reshape(N * substeps, 4)
        increments = h * (f0 @ RK4_WEIGHTS)
    bad = np.flatnonzero(~np.isfinite(increments))
    if bad.size:
        raise DivergedRolloutError(int(bad[0]) // substeps, "running cost is not finite")
    running = np.zeros(N + 1)
    running[1:] = np.cumsum(increments)[substeps - 1::substeps]
    traj = Trajectory(
        times=np.linspace(0.0, grid.horizon, N + 1),
        states=states,
        controls=grid.values.copy(),
        running_cost=running,
        substeps=substeps,
    )
    return RolloutCache(trajectory=traj, stages=stages if keep_stages else None)


def rollout(ocp: ReducedOCP, grid: ControlGrid, substeps: int = 4) -> Trajectory:
    """Forward shooting pass: RK4 sub-steps per control interval with the cost integrated alongside."""
    return rollout_with_stages(ocp, grid, substeps, keep_stages=False).trajectory


def reconstruct_group(ocp: ReducedOCP, traj: Trajectory) -> Trajectory:
    """Integrate g_dot = g xi(y, u) from g0, sampling xi at sub-step midpoints."""
    h = (traj.times[1] - traj.times[0]) / traj.substeps
    g = ocp.g0
    group = [g]
    for k in range(traj.controls.shape[0]):
        u = traj.controls[k]
        y = traj.states[k]
        for j in range(traj.substeps):
            y_next = rk4_step(ocp.dynamics, y, u, h) if j < traj.substeps - 1 else traj.states[k + 1]
            g = group_step(g, ocp.group_velocity(0.5 * (y + y_next), u), h)
            y = y_next
        group.append(g)
    return replace(traj, group=group)
