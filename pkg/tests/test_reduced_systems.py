import numpy as np
import pytest

from src.utils.errors import ConfigError, SingularityError
from src.utils.integrator import stage_eval
from src.utils.reduced_systems import (
    KeplerParams,
    RigidBodyParams,
    equivariance_check,
    jacobian_self_test,
    kepler_full_system,
    make_kepler,
    make_rigid_body,
    make_rotors,
    make_system,
    rigid_body_full_system,
)


def test_kepler_circular_orbit_is_equilibrium(kepler):
    y_bar = np.array([4.5, 0.0, 4.5 ** -1.5])
    assert np.max(np.abs(kepler.dynamics(y_bar, np.zeros(2)))) < 1e-14
    assert kepler.cost(y_bar, np.zeros(2)) < 1e-20
    assert kepler.params.v_theta_bar == pytest.approx(0.1047565, abs=1e-7)


@pytest.mark.parametrize("s_bar", np.linspace(1.0, 10.0, 10))
def test_kepler_equilibrium_family(s_bar):
    ocp = make_kepler(KeplerParams(s_bar=s_bar))
    y = np.array([s_bar, 0.0, np.sqrt(1.0 / s_bar ** 3)])
    assert np.max(np.abs(ocp.dynamics(y, np.zeros(2)))) < 1e-14


def test_kepler_nonpositive_radius_raises(kepler):
    with pytest.raises(SingularityError):
        kepler.dynamics(np.array([0.0, 0.0, 0.1]), np.zeros(2))
    with pytest.raises(SingularityError):
        kepler.jac_dynamics_y(np.array([-1.0, 0.0, 0.1]), np.zeros(2))


def test_kepler_group_velocity_is_angular_rate(kepler):
    assert kepler.group_velocity(np.array([5.0, 0.1, 0.3]), np.zeros(2))[0] == 0.3


def test_rigid_body_euler_equation(rigid_body):
    omega_dot = rigid_body.dynamics(np.array([0.9, 0.5, 0.5]), np.zeros(3))
    np.testing.assert_allclose(omega_dot, [-1.25, 0.81, -0.18], atol=1e-12)


def test_rigid_body_principal_axis_is_equilibrium(rigid_body):
    assert np.array_equal(rigid_body.dynamics(np.array([1.0, 0.0, 0.0]), np.zeros(3)), np.zeros(3))


def test_rotors_equilibrium_and_sum_identity(rotors, rng):
    y_bar = np.array([1.0, 0.0, 0.0, 0.0, 0.0, 0.0])
    assert np.max(np.abs(rotors.dynamics(y_bar, np.zeros(3)))) < 1e-15
    k_inv = 1.0 / np.array([0.1, 0.1, 0.1])
    for _ in range(20):
        y, u = rotors.sample(rng)
        f = rotors.dynamics(y, u)
        scale = max(1.0, float(np.max(np.abs(f))))
        assert np.max(np.abs(f[:3] + f[3:] - k_inv * u)) / scale < 1e-14


def test_rotors_signature():
    sig = make_rotors().signature
    assert (sig.n_so3, sig.n_s1, sig.algebra_dim) == (1, 3, 6)


@pytest.mark.parametrize("builder", [make_kepler, make_rigid_body, make_rotors])
def test_analytic_jacobians_match_finite_differences(builder, rng):
    assert jacobian_self_test(builder(), rng, points=20) < 1e-5


def test_batched_dynamics_match_pointwise(rigid_body, rng):
    ys = rng.normal(size=(3, 7))
    us = rng.normal(size=(3, 7))
    batched = rigid_body.dynamics(ys, us)
    assert batched.shape == (3, 7)
    for j in range(7):
        np.testing.assert_allclose(batched[:, j], rigid_body.dynamics(ys[:, j], us[:, j]), atol=1e-15)


@pytest.mark.parametrize("builder", [make_kepler, make_rigid_body, make_rotors])
def test_batched_derivatives_match_pointwise(builder, rng):
    ocp = builder()
    n, m = ocp.state_dim, ocp.control_dim
    samples = [ocp.sample(rng) for _ in range(6)]
    ys = np.array([y for y, _ in samples])
    us = np.array([u for _, u in samples])
    batched = {
        "jac_dynamics_y": stage_eval(ocp.jac_dynamics_y, ys, us, (n, n)),
        "jac_dynamics_u": stage_eval(ocp.jac_dynamics_u, ys, us, (n, m)),
        "grad_cost_y": stage_eval(ocp.grad_cost_y, ys, us, (n,)),
        "grad_cost_u": stage_eval(ocp.grad_cost_u, ys, us, (m,)),
    }
    costs = stage_eval(ocp.cost, ys, us, ())
    for j, (y, u) in enumerate(samples):
        for name, values in batched.items():
            np.testing.assert_allclose(values[j], getattr(ocp, name)(y, u), rtol=1e-14, atol=1e-15)
        assert costs[j] == pytest.approx(ocp.cost(y, u), rel=1e-14)


@pytest.mark.parametrize("full", [kepler_full_system, rigid_body_full_system])
def test_full_systems_are_equivariant(full, rng):
    assert equivariance_check(full(), trials=100, rng=rng) < 1e-10


def test_make_system_dispatch_and_validation():
    assert make_system("rigid_body", inertia=(2.0, 3.0, 4.0)).name == "rigid_body"
    with pytest.raises(ConfigError):
        make_system("pendulum")
    with pytest.raises(ConfigError):
        make_system("rigid_body", inertia=(1.0, -5.0, 10.0))
    with pytest.raises(ConfigError):
        RigidBodyParams(T=0.0)
    with pytest.raises(ConfigError):
        KeplerParams(y0=(-1.0, 0.0, 0.1))


def test_terminal_condition(kepler, rigid_body, rotors):
    assert kepler.fixed_terminal and rigid_body.fixed_terminal
    assert not rotors.fixed_terminal
    assert kepler.terminal.residual(np.array([6.5, 1.0, 2.0]))[0] == pytest.approx(0.5)
    np.testing.assert_array_equal(rigid_body.terminal.selector(3), np.eye(3))
