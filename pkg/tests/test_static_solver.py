import numpy as np
import pytest

from src.utils.errors import EmptyFeasibleSetError
from src.utils.self_checks import KEPLER_BOX, RIGID_BODY_BOX
from src.utils.static_solver import hamiltonian_gradients, kkt_residual, solve_static, static_bruteforce_oracle


def test_kepler_static_point(kepler):
    sol = solve_static(kepler, (np.array([4.4, 0.01, 0.1]), np.array([0.01, 0.0])))
    assert sol.converged
    np.testing.assert_allclose(sol.y_bar, [4.5, 0.0, 4.5 ** -1.5], atol=1e-9)
    np.testing.assert_allclose(sol.u_bar, [0.0, 0.0], atol=1e-9)
    np.testing.assert_allclose(sol.p_bar, [0.0, 0.0, 0.0], atol=1e-9)
    assert sol.residual_dyn < 1e-10 and sol.residual_kkt < 1e-10


def test_rigid_body_static_point(rigid_body):
    sol = solve_static(rigid_body, (np.array([0.95, 0.05, -0.05]), np.array([0.02, 0.0, -0.01])))
    np.testing.assert_allclose(sol.y_bar, [1.0, 0.0, 0.0], atol=1e-9)
    np.testing.assert_allclose(sol.u_bar, np.zeros(3), atol=1e-9)
    np.testing.assert_allclose(sol.p_bar, np.zeros(3), atol=1e-9)


def test_rotors_static_point_from_default_guess(rotors):
    sol = solve_static(rotors)
    assert sol.iterations == 0
    np.testing.assert_array_equal(sol.y_bar, [1.0, 0.0, 0.0, 0.0, 0.0, 0.0])
    np.testing.assert_array_equal(sol.u_bar, np.zeros(3))


def test_static_point_satisfies_pmp_stationarity(system_with_static):
    ocp, sol = system_with_static
    grad_y, grad_u = hamiltonian_gradients(ocp, sol)
    assert np.max(np.abs(grad_y)) < 1e-9
    assert np.max(np.abs(grad_u)) < 1e-9
    assert np.max(np.abs(ocp.dynamics(sol.y_bar, sol.u_bar))) < 1e-10


def test_kkt_residual_layout(kepler):
    z = np.concatenate([[4.5, 0.0, 4.5 ** -1.5], [0.0, 0.0], [0.0, 0.0, 0.0]])
    r = kkt_residual(kepler, z)
    assert r.shape == (3 + 2 + 3,)
    assert np.max(np.abs(r)) < 1e-15


def test_non_finite_guess_rejected(kepler):
    with pytest.raises(ValueError):
        solve_static(kepler, (np.array([np.nan, 0.0, 0.1]), np.zeros(2)))


@pytest.mark.parametrize("system, box", [("kepler", KEPLER_BOX), ("rigid_body", RIGID_BODY_BOX)])
def test_newton_matches_bruteforce_oracle(system, box, request):
    ocp = request.getfixturevalue(system)
    sol = solve_static(ocp)
    y_grid, u_grid = static_bruteforce_oracle(ocp, box)
    cell = np.array([(hi - lo) / 10.0 for lo, hi in box])
    offset = np.abs(np.concatenate([sol.y_bar - y_grid, sol.u_bar - u_grid])) / cell
    assert np.max(offset) <= 1.0 + 1e-9


def test_oracle_skips_only_points_outside_the_domain(kepler):
    # s = -0.5 is outside the Kepler domain; s = 4.5 stays on the grid
    box = [(-0.5, 9.5)] + KEPLER_BOX[1:]
    sol = solve_static(kepler)
    y_grid, u_grid = static_bruteforce_oracle(kepler, box)
    assert y_grid[0] > 0
    cell = np.array([(hi - lo) / 10.0 for lo, hi in box])
    offset = np.abs(np.concatenate([sol.y_bar - y_grid, sol.u_bar - u_grid])) / cell
    assert np.max(offset) <= 1.0 + 1e-9


def test_oracle_empty_feasible_set(kepler):
    # s_dot = v_s >= 0.4 everywhere in this box
    box = [(3.0, 6.0), (0.4, 0.5), (0.0, 0.3), (-0.5, 0.5), (-0.5, 0.5)]
    with pytest.raises(EmptyFeasibleSetError):
        static_bruteforce_oracle(kepler, box)


def test_oracle_argument_validation(kepler):
    with pytest.raises(ValueError):
        static_bruteforce_oracle(kepler, KEPLER_BOX, grid_pts=5)
    with pytest.raises(ValueError):
        static_bruteforce_oracle(kepler, KEPLER_BOX[:3])
