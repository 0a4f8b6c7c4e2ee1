from dataclasses import replace

import numpy as np
import pytest

from src.utils.errors import ConfigError, DimensionError
from src.utils.integrator import ControlGrid, reconstruct_group
from src.utils.ocp_solver import (
    STATUS_CONVERGED,
    STATUS_DIVERGED,
    STATUS_MAX_ITER,
    STATUS_STALLED,
    SolverConfig,
    adjoint_gradient,
    initial_controls,
    lbfgs,
    pmp_residual,
    solve,
)
from src.utils.reduced_systems import TerminalCondition, make_kepler, make_rigid_body, make_rotors
from src.utils.self_checks import gradient_relative_error
from src.utils.static_solver import solve_static


def test_adjoint_gradient_of_pure_control_cost(integrator_ocp, rng):
    grid = ControlGrid(rng.normal(size=(4, 1)), 1.0)
    ag = adjoint_gradient(integrator_ocp, grid)
    np.testing.assert_allclose(ag.gradient, grid.dt * grid.values, atol=1e-15)

    weighted = adjoint_gradient(integrator_ocp, grid, np.array([0.7]))
    np.testing.assert_allclose(weighted.gradient, grid.dt * (grid.values + 0.7), atol=1e-15)
    np.testing.assert_allclose(weighted.adjoints, -0.7, atol=1e-15)


def test_adjoint_gradient_zero_objective(integrator_ocp):
    ag = adjoint_gradient(integrator_ocp, ControlGrid(np.zeros((6, 1)), 1.0))
    assert np.array_equal(ag.gradient, np.zeros((6, 1)))
    assert ag.value == 0.0


def test_adjoint_gradient_weight_shape(kepler):
    with pytest.raises(DimensionError):
        adjoint_gradient(kepler, ControlGrid(np.zeros((5, 2)), kepler.horizon), np.zeros(2))


@pytest.mark.parametrize("builder", [make_kepler, make_rigid_body, make_rotors])
def test_adjoint_gradient_matches_finite_differences(builder, rng):
    ocp = builder()
    for _ in range(3):
        assert gradient_relative_error(ocp, rng, N=20) < 1e-5


def test_lbfgs_on_quadratic():
    A = np.diag(np.arange(1.0, 11.0))
    x_star = np.linspace(-1.0, 1.0, 10)

    def quadratic(x):
        d = x - x_star
        return 0.5 * d @ A @ d, A @ d

    res = lbfgs(quadratic, np.zeros(10), max_iter=200, gtol=1e-10)
    assert res.status == STATUS_CONVERGED
    assert np.max(np.abs(res.gradient)) < 1e-10
    np.testing.assert_allclose(res.x, x_star, atol=1e-9)
    assert res.iterations == len(res.history) - 1
    assert all(later < earlier for earlier, later in zip(res.history, res.history[1:]))


def test_lbfgs_at_stationary_start_does_no_work():
    res = lbfgs(lambda x: (float(x @ x), 2.0 * x), np.zeros(3))
    assert res.status == STATUS_CONVERGED
    assert res.iterations == 0
    assert res.history == [0.0]


def test_lbfgs_stalls_on_inconsistent_gradient():
    res = lbfgs(lambda x: (float(x @ x), -2.0 * x), np.array([1.0]), max_iter=50)
    assert res.status == STATUS_STALLED
    assert res.x[0] == 1.0
    assert res.value == 1.0


def test_lbfgs_reports_iteration_limit():
    A = np.diag(np.logspace(0.0, 4.0, 30))
    res = lbfgs(lambda x: (0.5 * x @ A @ x, A @ x), np.ones(30), max_iter=2, gtol=1e-12)
    assert res.status == STATUS_MAX_ITER
    assert res.iterations <= 2
    assert res.value < 0.5 * np.sum(np.diag(A))


def test_penalty_frozen_once_terminal_condition_holds(integrator_ocp):
    ocp = replace(integrator_ocp, y0=np.zeros(1), terminal=TerminalCondition((0,), np.array([1.0])))
    result = solve(ocp, SolverConfig(N=10))
    assert result.status == STATUS_CONVERGED
    assert result.constraint_violation < 1e-8
    np.testing.assert_allclose(result.trajectory.controls, 1.0, atol=1e-5)
    np.testing.assert_allclose(result.multipliers, [-1.0], atol=1e-4)
    cons, pens = result.history["constraint"], result.history["penalty"]
    for k in range(2, len(cons)):
        if cons[k - 1] < 1e-8 and cons[k - 1] <= 1.01 * cons[k - 2]:
            assert pens[k] == pens[k - 1]


def test_solver_config_validation():
    with pytest.raises(ConfigError):
        SolverConfig(N=0)
    with pytest.raises(ConfigError):
        SolverConfig(penalty_growth=1.0)
    with pytest.raises(ConfigError):
        SolverConfig(constraint_tol=0.0)


def test_initial_controls(kepler):
    assert np.array_equal(initial_controls(kepler, SolverConfig(N=8, cold_start=True)).values, np.zeros((8, 2)))
    grid = initial_controls(kepler, SolverConfig(N=8, init_control=(0.1, -0.2)))
    np.testing.assert_array_equal(grid.values[3], [0.1, -0.2])
    with pytest.raises(DimensionError):
        initial_controls(kepler, SolverConfig(N=8, init_control=(0.1,)))


def test_diverging_initial_rollout(blowup_ocp):
    result = solve(blowup_ocp, SolverConfig(N=40))
    assert result.status == STATUS_DIVERGED
    assert result.trajectory is None
    assert result.message


def test_start_on_turnpike_is_already_optimal(kepler_on_trim):
    result = solve(kepler_on_trim, SolverConfig(N=40), u_bar=np.zeros(2))
    assert result.status == STATUS_CONVERGED
    assert result.outer_iterations == 1
    assert result.inner_iterations == [0]
    assert abs(result.trajectory.cost) < 1e-12
    assert result.constraint_violation < 1e-8
    assert np.array_equal(result.trajectory.controls, np.zeros((40, 2)))
    assert result.trajectory.adjoints.shape == (41, 3)
    assert pmp_residual(kepler_on_trim, result) < 1e-10


def test_pmp_residual_detects_perturbed_control(kepler_on_trim):
    result = solve(kepler_on_trim, SolverConfig(N=40), u_bar=np.zeros(2))
    controls = result.trajectory.controls.copy()
    controls[10, 0] += 0.1
    perturbed = replace(result, trajectory=replace(result.trajectory, controls=controls))
    assert pmp_residual(kepler_on_trim, perturbed) > 1e-2


def test_free_terminal_single_inner_solve():
    ocp = make_rotors()
    result = solve(ocp, SolverConfig(N=30, max_inner=5))
    assert result.outer_iterations == 1
    assert result.constraint_violation == 0.0
    assert result.multipliers.shape == (0,)


@pytest.mark.slow
@pytest.mark.parametrize("builder", [make_kepler, make_rigid_body])
def test_fixed_terminal_solve_converges(builder):
    ocp = builder()
    sol = solve_static(ocp)
    N = 200 if ocp.name == "kepler" else 300
    result = solve(ocp, SolverConfig(N=N), sol.u_bar)
    assert result.status == STATUS_CONVERGED
    assert result.constraint_violation < 1e-8
    assert pmp_residual(ocp, result) < 1e-4

    cons, pens = result.history["constraint"], result.history["penalty"]
    for k in range(1, len(cons) - 1):
        if cons[k] > 1.01 * cons[k - 1]:
            assert pens[k + 1] > pens[k]

    traj = reconstruct_group(ocp, result.trajectory)
    for g in traj.group:
        for q in g.quaternions:
            assert abs(np.linalg.norm(q) - 1.0) < 1e-12
