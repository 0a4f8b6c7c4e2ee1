# src/utils/self_checks.py
"""
Invariant and oracle suite behind `tpl check`.
Each check returns a CheckResult; run_checks collects them in a fixed order.
"""
from __future__ import annotations
import logging
from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np

from src.utils.integrator import ControlGrid, reconstruct_group, rollout, rollout_with_stages
from src.utils.ocp_solver import adjoint_gradient
from src.utils.reduced_systems import (
    KeplerParams,
    ReducedOCP,
    equivariance_check,
    jacobian_self_test,
    kepler_full_system,
    make_kepler,
    make_rigid_body,
    make_rotors,
    rigid_body_full_system,
)
from src.utils.static_solver import solve_static, static_bruteforce_oracle
from src.utils.turnpike_analysis import (
    certify,
    lift_point,
    lifted_pmp_field,
    pmp_field,
    symmetry_zero_eigen_test,
    torus_generators,
)

logger = logging.getLogger(__name__)

KEPLER_BOX = [(3.0, 6.0), (-0.5, 0.5), (0.0, 0.3), (-0.5, 0.5), (-0.5, 0.5)]
RIGID_BODY_BOX = [(-1.5, 1.5)] * 3 + [(-1.0, 1.0)] * 3


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""


def _result(name: str, value: float, threshold: float, detail: str = "", above: bool = False) -> CheckResult:
    passed = value >= threshold if above else value < threshold
    return CheckResult(name, bool(passed), float(value), float(threshold), detail)


def built_in_systems() -> List[ReducedOCP]:
    return [make_kepler(), make_rigid_body(), make_rotors()]


# -------------- oracles --------------

def fd_gradient(ocp: ReducedOCP, grid: ControlGrid, terminal_weight: np.ndarray, substeps: int = 4, step: float = 1e-6) -> np.ndarray:
    """Central differences of J + <w, y_N> with respect to every control value."""
    def objective(values):
        traj = rollout(ocp, ControlGrid(values, grid.horizon), substeps)
        return traj.cost + float(terminal_weight @ traj.states[-1])

    grad = np.zeros_like(grid.values)
    for idx in np.ndindex(*grid.values.shape):
        h = step * max(1.0, abs(grid.values[idx]))
        vp, vm = grid.values.copy(), grid.values.copy()
        vp[idx] += h
        vm[idx] -= h
        grad[idx] = (objective(vp) - objective(vm)) / (2.0 * h)
    return grad


def gradient_relative_error(ocp: ReducedOCP, rng: np.random.Generator, N: int = 20, scale: float = 0.01) -> float:
    """Adjoint gradient vs central differences on one random grid around u_guess."""
    values = ocp.u_guess + scale * rng.standard_normal((N, ocp.control_dim))
    grid = ControlGrid(values, ocp.horizon)
    weight = rng.standard_normal(ocp.state_dim)
    adj = adjoint_gradient(ocp, grid, weight).gradient
    fd = fd_gradient(ocp, grid, weight)
    return float(np.max(np.abs(adj - fd)) / max(float(np.max(np.abs(fd))), 1e-12))


def rk4_convergence_factor(ocp: Optional[ReducedOCP] = None, dt: float = 0.1, T: float = 5.0) -> float:
    """Error ratio e(dt) / e(dt/2) of the final state against a dt/64 reference."""
    ocp = ocp or make_rigid_body()
    u = np.array([0.1, -0.2, 0.05])[: ocp.control_dim]

    def final_state(step):
        N = int(round(T / step))
        return rollout(ocp, ControlGrid.constant(u, N, T), substeps=1).states[-1]

    ref = final_state(dt / 64.0)
    coarse = np.linalg.norm(final_state(dt) - ref)
    fine = np.linalg.norm(final_state(dt / 2.0) - ref)
    return float(coarse / fine)


# -------------- checks --------------

def check_jacobians(rng: np.random.Generator) -> List[CheckResult]:
    return [_result(f"jacobian_self_test[{ocp.name}]", jacobian_self_test(ocp, rng), 1e-5) for ocp in built_in_systems()]


def check_equivariance(rng: np.random.Generator) -> List[CheckResult]:
    return [
        _result(f"equivariance[{system.name}]", equivariance_check(system, 20, rng), 1e-10)
        for system in (kepler_full_system(), rigid_body_full_system())
    ]


def check_kepler_equilibria(rng: np.random.Generator) -> CheckResult:
    worst = 0.0
    for s_bar in rng.uniform(1.0, 10.0, size=10):
        ocp = make_kepler(KeplerParams(s_bar=float(s_bar)))
        worst = max(worst, float(np.max(np.abs(ocp.dynamics(ocp.params.y_bar, np.zeros(2))))))
    return _result("kepler_equilibrium_family", worst, 1e-14)


def check_rotors_sum_identity(rng: np.random.Generator) -> CheckResult:
    ocp = make_rotors()
    k_inv = 1.0 / np.asarray(ocp.params.rotor_inertia)
    worst = 0.0
    for _ in range(20):
        y, u = ocp.sample(rng)
        dy = ocp.dynamics(y, u)
        worst = max(worst, float(np.max(np.abs(dy[:3] + dy[3:] - k_inv * u))) / max(1.0, float(np.max(np.abs(dy)))))
    return _result("rotors_sum_identity", worst, 1e-14)


def check_static_oracle() -> List[CheckResult]:
    out = []
    for ocp, box in ((make_kepler(), KEPLER_BOX), (make_rigid_body(), RIGID_BODY_BOX)):
        sol = solve_static(ocp)
        y_grid, u_grid = static_bruteforce_oracle(ocp, box)
        cell = np.array([(hi - lo) / 10.0 for lo, hi in box])
        offset = np.abs(np.concatenate([sol.y_bar - y_grid, sol.u_bar - u_grid])) / cell
        out.append(_result(f"static_vs_bruteforce[{ocp.name}]", float(np.max(offset)), 1.0 + 1e-9,
                           detail="distance in grid cells"))
    return out


def check_gradients(rng: np.random.Generator, grids: int = 10) -> List[CheckResult]:
    out = []
    for ocp in built_in_systems():
        worst = max(gradient_relative_error(ocp, rng) for _ in range(grids))
        out.append(_result(f"adjoint_gradient[{ocp.name}]", worst, 1e-5))
    return out


def check_spectra() -> List[CheckResult]:
    out = []
    for ocp in built_in_systems():
        lin, report = certify(ocp, solve_static(ocp))
        out.append(_result(f"hamiltonian_pairing[{ocp.name}]", lin.pairing_error, 1e-8))
        if ocp.name == "rotors":
            out.append(_result("rotors_zero_eigenvalues", report.zero_count, 1, above=True))
        else:
            out.append(_result(f"hyperbolic[{ocp.name}]", report.min_abs_real, report.zero_tol, above=True))
    return out


def check_symmetry_zero_eigen() -> List[CheckResult]:
    ocp = make_kepler()
    sol = solve_static(ocp)
    lifted = symmetry_zero_eigen_test(lifted_pmp_field(ocp), lift_point(ocp, sol), 1, torus_generators(ocp))
    reduced = symmetry_zero_eigen_test(pmp_field(ocp), np.concatenate([sol.y_bar, sol.p_bar]), 0)
    return [
        _result("lifted_kepler_zero_multiplicity", lifted, 1, above=True),
        _result("reduced_kepler_zero_multiplicity", reduced, 1),
    ]


def check_rk4_order() -> CheckResult:
    factor = rk4_convergence_factor()
    return CheckResult("rk4_self_convergence", bool(12.8 <= factor <= 19.2), factor, 16.0, "expected 16 +- 20%")


def check_quaternion_drift(rng: np.random.Generator) -> CheckResult:
    ocp = make_rigid_body()
    grid = ControlGrid(0.2 * rng.standard_normal((300, 3)), ocp.horizon)
    traj = reconstruct_group(ocp, rollout_with_stages(ocp, grid, keep_stages=False).trajectory)
    drift = max(abs(float(np.linalg.norm(g.quaternions[0])) - 1.0) for g in traj.group)
    return _result("quaternion_norm_drift", drift, 1e-12)


CHECKS: List[Callable] = [
    check_jacobians,
    check_equivariance,
    check_kepler_equilibria,
    check_rotors_sum_identity,
    check_static_oracle,
    check_gradients,
    check_spectra,
    check_symmetry_zero_eigen,
    check_rk4_order,
    check_quaternion_drift,
]


def run_checks(seed: int = 0) -> List[CheckResult]:
    rng = np.random.default_rng(seed)
    results: List[CheckResult] = []
    for check in CHECKS:
        takes_rng = "rng" in check.__code__.co_varnames[: check.__code__.co_argcount]
        out = check(rng) if takes_rng else check()
        for r in out if isinstance(out, list) else [out]:
            level = logging.INFO if r.passed else logging.ERROR
            logger.log(level, "check %s: %s (value %.3e, threshold %.3e)", r.name, "ok" if r.passed else "FAILED", r.value, r.threshold)
            results.append(r)
    return results
