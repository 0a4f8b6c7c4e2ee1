from __future__ import annotations

import numpy as np
import pytest

from src.utils.lie_groups import GroupElement, GroupSignature
from src.utils.reduced_systems import (
    KeplerParams,
    ReducedOCP,
    make_kepler,
    make_rigid_body,
    make_rotors,
)
from src.utils.static_solver import solve_static

V_THETA_BAR = float(np.sqrt(1.0 / 4.5 ** 3))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def kepler():
    return make_kepler()


@pytest.fixture
def rigid_body():
    return make_rigid_body()


@pytest.fixture
def rotors():
    return make_rotors()


@pytest.fixture
def kepler_on_trim():
    """Kepler started on the static orbit with the terminal radius equal to s_bar."""
    return make_kepler(KeplerParams(y0=(4.5, 0.0, V_THETA_BAR), s_T=4.5))


@pytest.fixture(params=["kepler", "rigid_body", "rotors"])
def system_with_static(request):
    ocp = {"kepler": make_kepler, "rigid_body": make_rigid_body, "rotors": make_rotors}[request.param]()
    return ocp, solve_static(ocp)


def scalar_ocp(dynamics, cost, grad_cost_y, grad_cost_u, jac_y, jac_u, y0=1.0, horizon=1.0) -> ReducedOCP:
    """One state, one control, one S^1 factor driven by the state."""
    return ReducedOCP(
        name="scalar",
        state_dim=1,
        control_dim=1,
        signature=GroupSignature(n_so3=0, n_s1=1),
        dynamics=dynamics,
        cost=cost,
        group_velocity=lambda y, u: np.array([y[0]]),
        jac_dynamics_y=jac_y,
        jac_dynamics_u=jac_u,
        grad_cost_y=grad_cost_y,
        grad_cost_u=grad_cost_u,
        jac_velocity_y=lambda y, u: np.ones((1, 1)),
        jac_velocity_u=lambda y, u: np.zeros((1, 1)),
        y0=np.array([y0]),
        g0=GroupElement((), np.zeros(1)),
        horizon=horizon,
        terminal=None,
        y_guess=np.zeros(1),
        u_guess=np.zeros(1),
        sample=lambda rng: (rng.uniform(-1, 1, 1), rng.uniform(-1, 1, 1)),
    )


@pytest.fixture
def integrator_ocp():
    """y_dot = u with f0 = u^2 / 2."""
    return scalar_ocp(
        dynamics=lambda y, u: np.asarray(u, dtype=float).copy(),
        cost=lambda y, u: 0.5 * np.asarray(u, dtype=float)[0] ** 2,
        grad_cost_y=lambda y, u: np.zeros(1),
        grad_cost_u=lambda y, u: np.asarray(u, dtype=float).copy(),
        jac_y=lambda y, u: np.zeros((1, 1)),
        jac_u=lambda y, u: np.ones((1, 1)),
    )


@pytest.fixture
def blowup_ocp():
    """y_dot = y^2 from y0 = 1 has a finite escape time t = 1."""
    return scalar_ocp(
        dynamics=lambda y, u: np.asarray(y, dtype=float) ** 2,
        cost=lambda y, u: 0.0,
        grad_cost_y=lambda y, u: np.zeros(1),
        grad_cost_u=lambda y, u: np.zeros(1),
        jac_y=lambda y, u: np.array([[2.0 * y[0]]]),
        jac_u=lambda y, u: np.zeros((1, 1)),
        y0=1.0,
        horizon=2.0,
    )
