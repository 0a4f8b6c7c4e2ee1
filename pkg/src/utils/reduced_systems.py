# src/utils/reduced_systems.py
"""
Symmetry-reduced optimal control problems and the three built-in systems.

A ReducedOCP never sees a group variable: dynamics f(y, u), running cost
f0(y, u) and group velocity xi(y, u) depend on the reduced state only, which
is what makes the group part of the problem cyclic.

Dynamics, costs and their derivatives are written component-wise so they
accept either a single point (shape (n,)) or a batch of column points (shape
(n, K)). Batched Jacobians carry the batch axis last, (n, n, K); a derivative
that does not depend on the point may come back without it. The brute-force
static oracle and the adjoint sweep rely on the batched form.
"""
from __future__ import annotations
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from src.utils.errors import ConfigError, SingularityError
from src.utils.lie_groups import GroupElement, GroupSignature, hat, quat_normalize, quat_to_matrix

Vec = np.ndarray
PointMap = Callable[[Vec, Vec], Vec]


@dataclass(frozen=True)
class TerminalCondition:
    """y(T)[indices] = values; the remaining components are free."""
    indices: Tuple[int, ...]
    values: np.ndarray

    def selector(self, state_dim: int) -> np.ndarray:
        S = np.zeros((len(self.indices), state_dim))
        S[np.arange(len(self.indices)), list(self.indices)] = 1.0
        return S

    def residual(self, y_final: Vec) -> np.ndarray:
        return np.asarray(y_final)[list(self.indices)] - self.values


@dataclass(frozen=True)
class ReducedOCP:
    name: str
    state_dim: int
    control_dim: int
    signature: GroupSignature
    dynamics: PointMap
    cost: Callable[[Vec, Vec], float]
    group_velocity: PointMap
    jac_dynamics_y: PointMap
    jac_dynamics_u: PointMap
    grad_cost_y: PointMap
    grad_cost_u: PointMap
    jac_velocity_y: PointMap
    jac_velocity_u: PointMap
    y0: np.ndarray
    g0: GroupElement
    horizon: float
    terminal: Optional[TerminalCondition]
    y_guess: np.ndarray
    u_guess: np.ndarray
    sample: Callable[[np.random.Generator], Tuple[Vec, Vec]]
    state_labels: Tuple[str, ...] = ()
    control_labels: Tuple[str, ...] = ()
    params: object = None

    @property
    def fixed_terminal(self) -> bool:
        return self.terminal is not None and len(self.terminal.indices) > 0


# -------------- parameter sets --------------

def _vec3(v, name: str) -> np.ndarray:
    arr = np.asarray(v, dtype=float).ravel()
    if arr.size != 3 or not np.all(np.isfinite(arr)):
        raise ConfigError(f"{name} must be a finite 3-vector, got {v!r}")
    return arr


@dataclass(frozen=True)
class KeplerParams:
    k: float = 1.0
    m2: float = 1.0
    s_bar: float = 4.5
    y0: Optional[Sequence[float]] = None   # defaults to (5, 0, sqrt(k / 5^3))
    s_T: Optional[float] = 6.0             # None leaves the whole terminal state free
    T: float = 40.0
    theta0: float = 0.0

    def __post_init__(self):
        for name in ("k", "m2", "s_bar", "T"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"Kepler parameter {name} must be positive, got {getattr(self, name)!r}")
        if self.y0 is not None:
            y0 = np.asarray(self.y0, dtype=float)
            if y0.size != 3 or y0[0] <= 0:
                raise ConfigError(f"Kepler y0 must be (s > 0, v_s, v_theta), got {self.y0!r}")

    @property
    def v_theta_bar(self) -> float:
        return float(np.sqrt(self.k / self.s_bar ** 3))

    @property
    def y_bar(self) -> np.ndarray:
        return np.array([self.s_bar, 0.0, self.v_theta_bar])


@dataclass(frozen=True)
class RigidBodyParams:
    inertia: Sequence[float] = (1.0, 5.0, 10.0)
    omega_ref: Sequence[float] = (1.0, 0.0, 0.0)
    u_ref: Sequence[float] = (0.0, 0.0, 0.0)
    omega0: Sequence[float] = (0.9, 0.5, 0.5)
    omega_T: Optional[Sequence[float]] = (0.9, 0.5, 0.5)
    T: float = 60.0

    def __post_init__(self):
        if np.any(_vec3(self.inertia, "inertia") <= 0):
            raise ConfigError(f"inertia must be componentwise positive, got {self.inertia!r}")
        for name in ("omega_ref", "u_ref", "omega0"):
            _vec3(getattr(self, name), name)
        if self.omega_T is not None:
            _vec3(self.omega_T, "omega_T")
        if not self.T > 0:
            raise ConfigError(f"horizon T must be positive, got {self.T!r}")


@dataclass(frozen=True)
class RotorsParams:
    inertia: Sequence[float] = (1.0, 5.0, 10.0)
    rotor_inertia: Sequence[float] = (0.1, 0.1, 0.1)
    omega_ref: Sequence[float] = (1.0, 0.0, 0.0)
    u_ref: Sequence[float] = (0.0, 0.0, 0.0)
    omega0: Sequence[float] = (0.9, 0.5, 0.5)
    v_theta0: Sequence[float] = (0.0, 0.0, 0.0)
    T: float = 60.0

    def __post_init__(self):
        if np.any(_vec3(self.inertia, "inertia") <= 0):
            raise ConfigError(f"inertia must be componentwise positive, got {self.inertia!r}")
        if np.any(_vec3(self.rotor_inertia, "rotor_inertia") <= 0):
            raise ConfigError(f"rotor_inertia must be componentwise positive, got {self.rotor_inertia!r}")
        for name in ("omega_ref", "u_ref", "omega0", "v_theta0"):
            _vec3(getattr(self, name), name)
        if not self.T > 0:
            raise ConfigError(f"horizon T must be positive, got {self.T!r}")


# -------------- helpers --------------

def _col(ref: np.ndarray, like: np.ndarray) -> np.ndarray:
    """Reshape a reference vector so it broadcasts against single or batched points."""
    return ref.reshape(ref.shape + (1,) * (np.ndim(like) - 1))


def _cross(a, b) -> np.ndarray:
    return np.array([
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ])


def _hat_rows(w):
    """Entries of hat(w) as nested lists, so batched components stay batched."""
    return [[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]]


def _matrix(rows) -> np.ndarray:
    """Jacobian from scalar or batched entries; the batch axis, if any, goes last."""
    entries = np.broadcast_arrays(*(np.asarray(e, dtype=float) for row in rows for e in row))
    return np.stack(entries).reshape((len(rows), len(rows[0])) + entries[0].shape)


def _tracking_cost(y_ref: np.ndarray, u_ref: np.ndarray, tracked: np.ndarray):
    """f0 = 1/2 (|P (y - y_ref)|^2 + |u - u_ref|^2), P selecting the tracked states."""
    weight = tracked.astype(float)

    def cost(y, u):
        dy = (y - _col(y_ref, y)) * _col(weight, y)
        du = u - _col(u_ref, u)
        return 0.5 * (np.sum(dy * dy, axis=0) + np.sum(du * du, axis=0))

    def grad_y(y, u):
        return (np.asarray(y, dtype=float) - _col(y_ref, y)) * _col(weight, y)

    def grad_u(y, u):
        return np.asarray(u, dtype=float) - _col(u_ref, u)

    return cost, grad_y, grad_u


# -------------- Kepler --------------

def make_kepler(params: KeplerParams = KeplerParams()) -> ReducedOCP:
    """Kepler problem reduced by the rotation symmetry; y = (s, v_s, v_theta), u = (u_s, u_theta)."""
    k, m2 = params.k, params.m2
    y_bar = params.y_bar
    u_bar = np.zeros(2)

    def _radius(y):
        s = y[0]
        if np.any(s <= 0):
            raise SingularityError(f"Kepler radius must stay positive, got s={np.min(s)!r}")
        return s

    def dynamics(y, u):
        s = _radius(y)
        vs, vt = y[1], y[2]
        return np.array([
            vs,
            s * vt ** 2 - k / s ** 2 + u[0] / m2,
            -2.0 * vt * vs / s + u[1] / (m2 * s ** 2),
        ])

    def jac_y(y, u):
        s = _radius(y)
        vs, vt = y[1], y[2]
        return _matrix([
            [0.0, 1.0, 0.0],
            [vt ** 2 + 2.0 * k / s ** 3, 0.0, 2.0 * s * vt],
            [2.0 * vt * vs / s ** 2 - 2.0 * u[1] / (m2 * s ** 3), -2.0 * vt / s, -2.0 * vs / s],
        ])

    def jac_u(y, u):
        s = _radius(y)
        return _matrix([
            [0.0, 0.0],
            [1.0 / m2, 0.0],
            [0.0, 1.0 / (m2 * s ** 2)],
        ])

    cost, grad_y, grad_u = _tracking_cost(y_bar, u_bar, np.ones(3, dtype=bool))

    def sample(rng):
        y = np.array([rng.uniform(3.0, 7.0), rng.uniform(-0.5, 0.5), rng.uniform(0.0, 0.3)])
        return y, rng.uniform(-0.5, 0.5, size=2)

    y0 = params.y0
    if y0 is None:
        y0 = (5.0, 0.0, float(np.sqrt(k / 5.0 ** 3)))
    terminal = None if params.s_T is None else TerminalCondition((0,), np.array([float(params.s_T)]))

    return ReducedOCP(
        name="kepler",
        state_dim=3,
        control_dim=2,
        signature=GroupSignature(n_so3=0, n_s1=1),
        dynamics=dynamics,
        cost=cost,
        group_velocity=lambda y, u: np.array([y[2]]),
        jac_dynamics_y=jac_y,
        jac_dynamics_u=jac_u,
        grad_cost_y=grad_y,
        grad_cost_u=grad_u,
        jac_velocity_y=lambda y, u: np.array([[0.0, 0.0, 1.0]]),
        jac_velocity_u=lambda y, u: np.zeros((1, 2)),
        y0=np.asarray(y0, dtype=float),
        g0=GroupElement((), np.array([params.theta0])),
        horizon=float(params.T),
        terminal=terminal,
        y_guess=y_bar.copy(),
        u_guess=u_bar.copy(),
        sample=sample,
        state_labels=("s", "v_s", "v_theta"),
        control_labels=("u_s", "u_theta"),
        params=params,
    )


# -------------- rigid body --------------

def make_rigid_body(params: RigidBodyParams = RigidBodyParams()) -> ReducedOCP:
    """Euler-Poincare rigid body I dOmega = I Omega x Omega + u with reconstruction dR = R Omega."""
    inertia = np.asarray(params.inertia, dtype=float)
    inv_inertia = 1.0 / inertia
    omega_ref = np.asarray(params.omega_ref, dtype=float)
    u_ref = np.asarray(params.u_ref, dtype=float)

    def dynamics(y, u):
        momentum = _col(inertia, y) * y
        return _col(inv_inertia, y) * (_cross(momentum, y) + u)

    def jac_y(y, u):
        # d/dOmega (I Omega x Omega) = hat(I Omega) - hat(Omega) I
        hm, hw = _hat_rows(_col(inertia, y) * y), _hat_rows(y)
        return _matrix([[inv_inertia[i] * (hm[i][j] - hw[i][j] * inertia[j]) for j in range(3)] for i in range(3)])

    cost, grad_y, grad_u = _tracking_cost(omega_ref, u_ref, np.ones(3, dtype=bool))

    def sample(rng):
        return rng.uniform(-1.5, 1.5, size=3), rng.uniform(-1.0, 1.0, size=3)

    terminal = None if params.omega_T is None else TerminalCondition((0, 1, 2), np.asarray(params.omega_T, dtype=float))

    return ReducedOCP(
        name="rigid_body",
        state_dim=3,
        control_dim=3,
        signature=GroupSignature(n_so3=1, n_s1=0),
        dynamics=dynamics,
        cost=cost,
        group_velocity=lambda y, u: np.asarray(y, dtype=float).copy(),
        jac_dynamics_y=jac_y,
        jac_dynamics_u=lambda y, u: np.diag(inv_inertia),
        grad_cost_y=grad_y,
        grad_cost_u=grad_u,
        jac_velocity_y=lambda y, u: np.eye(3),
        jac_velocity_u=lambda y, u: np.zeros((3, 3)),
        y0=np.asarray(params.omega0, dtype=float),
        g0=GroupElement.identity(GroupSignature(n_so3=1)),
        horizon=float(params.T),
        terminal=terminal,
        y_guess=omega_ref.copy(),
        u_guess=u_ref.copy(),
        sample=sample,
        state_labels=("Omega_1", "Omega_2", "Omega_3"),
        control_labels=("u_1", "u_2", "u_3"),
        params=params,
    )


# -------------- rigid body with rotors --------------

def make_rotors(params: RotorsParams = RotorsParams()) -> ReducedOCP:
    """Rigid body with three rotors reduced by SO(3) x T^3; y = (Omega, v_theta)."""
    inertia = np.asarray(params.inertia, dtype=float)
    rotor = np.asarray(params.rotor_inertia, dtype=float)
    inv_i = 1.0 / inertia
    inv_k = 1.0 / rotor
    omega_ref = np.asarray(params.omega_ref, dtype=float)
    u_ref = np.asarray(params.u_ref, dtype=float)

    def dynamics(y, u):
        omega, v = y[:3], y[3:]
        pi = _col(inertia + rotor, y) * omega + _col(rotor, y) * v
        torque = _col(inv_i, y) * _cross(pi, omega)
        return np.concatenate([
            torque - _col(inv_i, y) * u,
            -torque + _col(inv_k + inv_i, y) * u,
        ])

    def jac_y(y, u):
        omega, v = y[:3], y[3:]
        full = inertia + rotor
        hp = _hat_rows(_col(full, y) * omega + _col(rotor, y) * v)
        hw = _hat_rows(omega)
        top = [
            [inv_i[i] * (hp[i][j] - hw[i][j] * full[j]) for j in range(3)]
            + [-inv_i[i] * hw[i][j] * rotor[j] for j in range(3)]
            for i in range(3)
        ]
        return _matrix(top + [[-e for e in row] for row in top])

    def jac_u(y, u):
        return np.vstack([-np.diag(inv_i), np.diag(inv_k + inv_i)])

    tracked = np.array([True, True, True, False, False, False])
    cost, grad_y, grad_u = _tracking_cost(np.concatenate([omega_ref, np.zeros(3)]), u_ref, tracked)

    def sample(rng):
        return np.concatenate([rng.uniform(-1.5, 1.5, 3), rng.uniform(-1.0, 1.0, 3)]), rng.uniform(-1.0, 1.0, 3)

    signature = GroupSignature(n_so3=1, n_s1=3)
    return ReducedOCP(
        name="rotors",
        state_dim=6,
        control_dim=3,
        signature=signature,
        dynamics=dynamics,
        cost=cost,
        group_velocity=lambda y, u: np.asarray(y, dtype=float).copy(),
        jac_dynamics_y=jac_y,
        jac_dynamics_u=jac_u,
        grad_cost_y=grad_y,
        grad_cost_u=grad_u,
        jac_velocity_y=lambda y, u: np.eye(6),
        jac_velocity_u=lambda y, u: np.zeros((6, 3)),
        y0=np.concatenate([np.asarray(params.omega0, dtype=float), np.asarray(params.v_theta0, dtype=float)]),
        g0=GroupElement.identity(signature),
        horizon=float(params.T),
        terminal=None,
        y_guess=np.concatenate([omega_ref, np.zeros(3)]),
        u_guess=u_ref.copy(),
        sample=sample,
        state_labels=("Omega_1", "Omega_2", "Omega_3", "v_theta_1", "v_theta_2", "v_theta_3"),
        control_labels=("u_1", "u_2", "u_3"),
        params=params,
    )


SYSTEM_BUILDERS = {
    "kepler": (KeplerParams, make_kepler),
    "rigid_body": (RigidBodyParams, make_rigid_body),
    "rotors": (RotorsParams, make_rotors),
}


def make_system(problem: str, **params) -> ReducedOCP:
    """Dispatch to the per-system builder, like a rules table keyed by problem name."""
    if problem not in SYSTEM_BUILDERS:
        raise ConfigError(f"unknown problem {problem!r}; expected one of {sorted(SYSTEM_BUILDERS)}")
    params_cls, builder = SYSTEM_BUILDERS[problem]
    return builder(params_cls(**params))


# -------------- Jacobian self-test --------------

def fd_jacobian(fun: Callable[[Vec], Vec], x: Vec, rel_step: float = 1e-6) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        h = rel_step * max(1.0, abs(x[i]))
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        cols.append((np.atleast_1d(fun(xp)) - np.atleast_1d(fun(xm))) / (2.0 * h))
    return np.column_stack(cols)


def jacobian_self_test(ocp: ReducedOCP, rng: np.random.Generator, points: int = 20) -> float:
    """Max relative mismatch between analytic Jacobians and central differences."""
    worst = 0.0
    for _ in range(points):
        y, u = ocp.sample(rng)
        pairs = [
            (ocp.jac_dynamics_y(y, u), fd_jacobian(lambda z: ocp.dynamics(z, u), y)),
            (ocp.jac_dynamics_u(y, u), fd_jacobian(lambda w: ocp.dynamics(y, w), u)),
            (np.atleast_2d(ocp.grad_cost_y(y, u)), fd_jacobian(lambda z: ocp.cost(z, u), y)),
            (np.atleast_2d(ocp.grad_cost_u(y, u)), fd_jacobian(lambda w: ocp.cost(y, w), u)),
            (ocp.jac_velocity_y(y, u), fd_jacobian(lambda z: ocp.group_velocity(z, u), y)),
            (ocp.jac_velocity_u(y, u), fd_jacobian(lambda w: ocp.group_velocity(y, w), u)),
        ]
        for analytic, numeric in pairs:
            scale = max(1.0, float(np.max(np.abs(analytic))))
            worst = max(worst, float(np.max(np.abs(analytic - numeric))) / scale)
    return worst


# -------------- full (unreduced) systems --------------

@dataclass(frozen=True)
class FullSystem:
    """Unreduced vector field with its group action, used to test equivariance."""
    name: str
    vector_field: Callable
    act: Callable
    push_forward: Callable
    sample_state: Callable
    sample_group: Callable
    sample_control: Callable
    difference: Callable = field(default=lambda a, b: float(np.linalg.norm(np.asarray(a) - np.asarray(b))))


def kepler_full_system(params: KeplerParams = KeplerParams()) -> FullSystem:
    """x = (s, theta, v_s, v_theta); S^1 acts by theta -> theta + alpha."""
    reduced = make_kepler(params)

    def vector_field(x, u):
        s, theta, vs, vt = x
        ds, dvs, dvt = reduced.dynamics(np.array([s, vs, vt]), u)
        return np.array([ds, vt, dvs, dvt])

    def act(alpha, x):
        return np.array([x[0], x[1] + alpha, x[2], x[3]])

    return FullSystem(
        name="kepler",
        vector_field=vector_field,
        act=act,
        push_forward=lambda alpha, x, v: np.asarray(v, dtype=float).copy(),
        sample_state=lambda rng: np.array([rng.uniform(3.0, 7.0), rng.uniform(-10.0, 10.0),
                                           rng.uniform(-0.5, 0.5), rng.uniform(0.0, 0.3)]),
        sample_group=lambda rng: float(rng.uniform(-np.pi, np.pi)),
        sample_control=lambda rng: rng.uniform(-0.5, 0.5, size=2),
    )


def rigid_body_full_system(params: RigidBodyParams = RigidBodyParams()) -> FullSystem:
    """x = (R, Omega); SO(3) acts by left multiplication R -> Q R."""
    reduced = make_rigid_body(params)

    def vector_field(x, u):
        R, omega = x
        return R @ hat(omega), reduced.dynamics(omega, u)

    def sample_rotation(rng):
        return quat_to_matrix(quat_normalize(rng.normal(size=4)))

    def difference(a, b):
        return float(np.linalg.norm(a[0] - b[0]) + np.linalg.norm(a[1] - b[1]))

    return FullSystem(
        name="rigid_body",
        vector_field=vector_field,
        act=lambda Q, x: (Q @ x[0], x[1]),
        push_forward=lambda Q, x, v: (Q @ v[0], v[1]),
        sample_state=lambda rng: (sample_rotation(rng), rng.uniform(-1.5, 1.5, size=3)),
        sample_group=sample_rotation,
        sample_control=lambda rng: rng.uniform(-1.0, 1.0, size=3),
        difference=difference,
    )


def equivariance_check(system: FullSystem, trials: int, rng: np.random.Generator) -> float:
    """max over trials of |dPhi_g f(x, u) - f(Phi_g x, u)|."""
    worst = 0.0
    for _ in range(trials):
        x = system.sample_state(rng)
        u = system.sample_control(rng)
        g = system.sample_group(rng)
        lhs = system.push_forward(g, x, system.vector_field(x, u))
        rhs = system.vector_field(system.act(g, x), u)
        worst = max(worst, system.difference(lhs, rhs))
    return worst
