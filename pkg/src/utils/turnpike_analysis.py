# src/utils/turnpike_analysis.py
"""
Turnpike certification and measurement.

certify() linearizes the PMP system at the static point and checks the
hypotheses of the local exponential turnpike property: H_uu negative definite,
W positive definite, the Kalman rank condition for (A, B) and hyperbolicity of
the Hamiltonian matrix M. The measured side anchors the trim at mid-horizon,
builds the deviation series and fits the envelope C (e^{-mu t} + e^{-mu (T-t)}).

Sign convention throughout: H(y, p, u) = <p, f(y, u)> - f0(y, u).
"""
from __future__ import annotations
import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from src.utils.errors import (
    ConvergenceError,
    DimensionError,
    HessianSymmetryError,
    NotACriticalPointError,
    SingularMatrixError,
)
from src.utils.integrator import Trajectory
from src.utils.lie_groups import GroupElement, group_distance, trim_flow
from src.utils.ocp_solver import SolveResult
from src.utils.reduced_systems import ReducedOCP, fd_jacobian
from src.utils.static_solver import StaticSolution

logger = logging.getLogger(__name__)

HESSIAN_STEP = 1e-5
SYMMETRY_TOL = 1e-8
ZERO_TOL = 1e-7
MAX_EIG_SIZE = 24
NOISE_FLOOR = 1e-13
MIN_FIT_SAMPLES = 10

VERDICT_POSITIVE = "positive"
VERDICT_NEGATIVE = "negative"
VERDICT_INCONCLUSIVE = "inconclusive"


@dataclass
class LinearizationResult:
    H_uu: np.ndarray
    H_yy: np.ndarray
    H_uy: np.ndarray
    A: np.ndarray
    B: np.ndarray
    W: np.ndarray
    M: np.ndarray
    eigenvalues: Optional[np.ndarray] = None
    min_abs_real: float = float("nan")
    zero_count: int = 0
    pairing_error: float = float("nan")


@dataclass
class HyperbolicityReport:
    hyperbolic: bool
    mu: float
    kalman_rank: int
    state_dim: int
    Huu_negdef: bool
    W_posdef: bool
    zero_count: int
    min_abs_real: float
    pairing_error: float
    zero_tol: float = ZERO_TOL

    @property
    def hypotheses_hold(self) -> bool:
        return self.Huu_negdef and self.W_posdef and self.kalman_rank == self.state_dim and self.hyperbolic


@dataclass
class EnvelopeFit:
    C_hat: float
    mu_hat: float
    r_squared: float
    plateau: float
    mu_in: float = float("nan")
    mu_out: float = float("nan")
    C_in: float = float("nan")
    C_out: float = float("nan")
    r2_in: float = float("nan")
    r2_out: float = float("nan")
    samples_in: int = 0
    samples_out: int = 0
    reliable: bool = True

    def envelope(self, times: np.ndarray, T: float) -> np.ndarray:
        t = np.asarray(times, dtype=float)
        return self.C_hat * (np.exp(-self.mu_hat * t) + np.exp(-self.mu_hat * (T - t)))

    def decays(self, r2_min: float = 0.9) -> bool:
        return bool(self.reliable and self.mu_hat > 0 and self.r_squared >= r2_min)


@dataclass
class TrimTrajectory:
    times: np.ndarray
    anchor_index: int
    xi: np.ndarray
    group: List[GroupElement]
    g0: GroupElement             # trim value at t = 0, flowed back from the anchor
    y_bar: np.ndarray
    u_bar: np.ndarray
    p_bar: np.ndarray

    @property
    def anchor_time(self) -> float:
        return float(self.times[self.anchor_index])


@dataclass
class DeviationSeries:
    times: np.ndarray
    eps_red: np.ndarray
    eps_grp: np.ndarray
    adjoint_included: bool


@dataclass
class TurnpikeReport:
    hyperbolicity: HyperbolicityReport
    trim: TrimTrajectory
    deviation: DeviationSeries
    fit_red: EnvelopeFit
    fit_grp: EnvelopeFit
    verdict: str
    mu_ratio: float
    rate_consistent: bool
    notes: List[str] = field(default_factory=list)


# -------------- Hamiltonian derivatives --------------

def _grad_u_H(ocp: ReducedOCP, y, p, u, p_theta=None) -> np.ndarray:
    g = ocp.jac_dynamics_u(y, u).T @ p - ocp.grad_cost_u(y, u)
    if p_theta is not None:
        g = g + ocp.jac_velocity_u(y, u)[-p_theta.size:].T @ p_theta
    return g


def _grad_y_H(ocp: ReducedOCP, y, p, u, p_theta=None) -> np.ndarray:
    g = ocp.jac_dynamics_y(y, u).T @ p - ocp.grad_cost_y(y, u)
    if p_theta is not None:
        g = g + ocp.jac_velocity_y(y, u)[-p_theta.size:].T @ p_theta
    return g


def _check_symmetric(name: str, H: np.ndarray) -> np.ndarray:
    asym = float(np.max(np.abs(H - H.T))) if H.size else 0.0
    if asym > SYMMETRY_TOL * max(1.0, float(np.max(np.abs(H)))):
        raise HessianSymmetryError(name, asym)
    return 0.5 * (H + H.T)


def build_hamiltonian_blocks(ocp: ReducedOCP, sol: StaticSolution, step: float = HESSIAN_STEP) -> LinearizationResult:
    """
    Second derivatives of H at (y_bar, p_bar, u_bar) by central differences of
    the analytic gradients, then A, B, W and M = [[A, -B H_uu^-1 B^T], [W, -A^T]].
    """
    y, u, p = sol.y_bar, sol.u_bar, sol.p_bar
    H_yy = fd_jacobian(lambda z: _grad_y_H(ocp, z, p, u), y, step)
    H_uy = fd_jacobian(lambda z: _grad_u_H(ocp, z, p, u), y, step)
    H_yu = fd_jacobian(lambda w: _grad_y_H(ocp, y, p, w), u, step)
    H_uu = fd_jacobian(lambda w: _grad_u_H(ocp, y, p, w), u, step)

    H_yy = _check_symmetric("H_yy", H_yy)
    H_uu = _check_symmetric("H_uu", H_uu)
    mixed = float(np.max(np.abs(H_yu - H_uy.T))) if H_uy.size else 0.0
    if mixed > SYMMETRY_TOL * max(1.0, float(np.max(np.abs(H_uy)))):
        raise HessianSymmetryError("H_yu / H_uy", mixed)
    H_uy = 0.5 * (H_uy + H_yu.T)

    cond = float(np.linalg.cond(H_uu))
    if not np.isfinite(cond) or cond > 1e12:
        raise SingularMatrixError("H_uu is singular, the strict Legendre condition fails", cond)

    f_y = ocp.jac_dynamics_y(y, u)
    B = ocp.jac_dynamics_u(y, u)
    Huu_inv = np.linalg.inv(H_uu)
    A = f_y - B @ Huu_inv @ H_uy
    W = _check_symmetric("W", -H_yy + H_uy.T @ Huu_inv @ H_uy)
    M = np.block([[A, -B @ Huu_inv @ B.T], [W, -A.T]])
    logger.debug("Hamiltonian blocks for %s: cond(H_uu)=%.3e |M|=%.3e", ocp.name, cond, np.linalg.norm(M))
    return LinearizationResult(H_uu=H_uu, H_yy=H_yy, H_uy=H_uy, A=A, B=B, W=W, M=M)


# -------------- spectrum --------------

def eigenvalues(M: np.ndarray, residual_tol: float = 1e-8) -> np.ndarray:
    """
    Full spectrum of a small dense non-symmetric matrix (LAPACK geev: balancing,
    Hessenberg reduction, shifted QR), sorted by (real, imag). Every eigenpair
    is checked through |M v - lam v| / |v|.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"eigenvalues need a square matrix, got shape {M.shape}")
    if M.shape[0] > MAX_EIG_SIZE:
        raise DimensionError(f"matrix of size {M.shape[0]} exceeds the supported {MAX_EIG_SIZE}")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    try:
        lam, vecs = scipy.linalg.eig(M)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(f"QR iteration did not converge: {exc}") from exc

    scale = max(1.0, float(np.linalg.norm(M, 2)))
    for i in range(lam.size):
        v = vecs[:, i]
        res = float(np.linalg.norm(M @ v - lam[i] * v) / np.linalg.norm(v))
        if res > residual_tol * scale:
            raise ConvergenceError(f"eigenpair {i} has residual {res:.3e}", {"residual": res})
    order = np.lexsort((lam.imag, lam.real))
    return lam[order]


def spectral_pairing_error(lam: Sequence[complex]) -> float:
    """Greedy match of every eigenvalue with -conj of another; max mismatch."""
    lam = np.asarray(lam, dtype=complex)
    unused = list(range(lam.size))
    worst = 0.0
    while unused:
        i = unused.pop(0)
        target = -np.conj(lam[i])
        candidates = unused + [i]
        dist = [abs(lam[j] - target) for j in candidates]
        best = int(np.argmin(dist))
        worst = max(worst, float(dist[best]))
        if candidates[best] != i:
            unused.remove(candidates[best])
    return worst


def kalman_rank(A: np.ndarray, B: np.ndarray, rel_tol: float = 1e-10) -> int:
    n = A.shape[0]
    blocks = [B]
    for _ in range(n - 1):
        blocks.append(A @ blocks[-1])
    sv = scipy.linalg.svdvals(np.hstack(blocks))
    if sv.size == 0 or sv[0] == 0.0:
        return 0
    return int(np.sum(sv > rel_tol * sv[0]))


def certify(ocp: ReducedOCP, sol: StaticSolution, zero_tol: float = ZERO_TOL) -> Tuple[LinearizationResult, HyperbolicityReport]:
    lin = build_hamiltonian_blocks(ocp, sol)
    lam = eigenvalues(lin.M)
    real = np.abs(lam.real)
    lin.eigenvalues = lam
    lin.min_abs_real = float(np.min(real))
    lin.zero_count = int(np.sum(np.abs(lam) < zero_tol))
    lin.pairing_error = spectral_pairing_error(lam)

    hyperbolic = lin.min_abs_real > zero_tol
    stable = real[(lam.real < 0) & (real > zero_tol)]
    mu = float(np.min(stable)) if stable.size else float("nan")

    report = HyperbolicityReport(
        hyperbolic=bool(hyperbolic),
        mu=mu,
        kalman_rank=kalman_rank(lin.A, lin.B),
        state_dim=ocp.state_dim,
        Huu_negdef=bool(np.all(np.linalg.eigvalsh(lin.H_uu) < -zero_tol)),
        W_posdef=bool(np.all(np.linalg.eigvalsh(lin.W) > zero_tol)),
        zero_count=lin.zero_count,
        min_abs_real=lin.min_abs_real,
        pairing_error=lin.pairing_error,
        zero_tol=zero_tol,
    )
    logger.info(
        "certify %s: hyperbolic=%s mu=%.6g zero_count=%d kalman_rank=%d/%d",
        ocp.name, report.hyperbolic, mu, report.zero_count, report.kalman_rank, ocp.state_dim,
    )
    return lin, report


# -------------- PMP vector fields --------------

def optimal_control(ocp: ReducedOCP, y, p, u0=None, p_theta=None, tol: float = 1e-13, max_iter: int = 50) -> np.ndarray:
    """Solve grad_u H(y, p, u) = 0 for u by Newton with a difference Hessian."""
    u = np.array(ocp.u_guess if u0 is None else u0, dtype=float)
    for _ in range(max_iter):
        g = _grad_u_H(ocp, y, p, u, p_theta)
        if np.max(np.abs(g)) < tol:
            break
        H_uu = fd_jacobian(lambda w: _grad_u_H(ocp, y, p, w, p_theta), u, HESSIAN_STEP)
        u = u - np.linalg.solve(H_uu, g)
    return u


def pmp_field(ocp: ReducedOCP) -> Callable[[np.ndarray], np.ndarray]:
    """z = (y, p) -> (f(y, u*), -grad_y H(y, p, u*)) with u* maximizing H."""
    n = ocp.state_dim

    def field(z):
        z = np.asarray(z, dtype=float)
        y, p = z[:n], z[n:]
        u = optimal_control(ocp, y, p)
        return np.concatenate([ocp.dynamics(y, u), -_grad_y_H(ocp, y, p, u)])

    return field


def lifted_pmp_field(ocp: ReducedOCP) -> Callable[[np.ndarray], np.ndarray]:
    """
    PMP field on z = (y, theta, p, p_theta) for torus symmetry groups:
    theta_dot = xi(y, u*), p_theta_dot = 0, and p_theta enters grad_y H through
    d xi / dy. The field never reads theta.
    """
    if ocp.signature.n_so3:
        raise DimensionError(f"{ocp.name}: lifted PMP field is only provided for torus symmetry groups")
    n, k = ocp.state_dim, ocp.signature.n_s1

    def field(z):
        z = np.asarray(z, dtype=float)
        y, p, p_theta = z[:n], z[n + k:2 * n + k], z[2 * n + k:]
        u = optimal_control(ocp, y, p, p_theta=p_theta)
        return np.concatenate([
            ocp.dynamics(y, u),
            ocp.group_velocity(y, u)[-k:],
            -_grad_y_H(ocp, y, p, u, p_theta),
            np.zeros(k),
        ])

    return field


def lift_point(ocp: ReducedOCP, sol: StaticSolution, theta=None) -> np.ndarray:
    """Static point of the reduced problem as a point of the lifted field, with p_theta = 0."""
    k = ocp.signature.n_s1
    theta = ocp.g0.angles if theta is None else np.atleast_1d(np.asarray(theta, dtype=float))
    return np.concatenate([sol.y_bar, theta, sol.p_bar, np.zeros(k)])


def torus_generators(ocp: ReducedOCP) -> np.ndarray:
    """Infinitesimal generators of the angle translations on the lifted layout (columns)."""
    n, k = ocp.state_dim, ocp.signature.n_s1
    G = np.zeros((2 * (n + k), k))
    G[n + np.arange(k), np.arange(k)] = 1.0
    return G


def symmetry_zero_eigen_test(
    field: Callable[[np.ndarray], np.ndarray],
    point: np.ndarray,
    n_sym: int,
    generators: Optional[np.ndarray] = None,
    zero_tol: float = 1e-8,
    residual_tol: float = 1e-8,
) -> int:
    """
    Multiplicity of the zero eigenvalue of the difference Jacobian of field at
    point. Without generators point must be a zero of the field. With
    generators it may be a relative equilibrium: the field must be tangent to
    the group orbit, i.e. vanish after projecting out span(generators).
    """
    point = np.asarray(point, dtype=float)
    value = np.asarray(field(point), dtype=float)
    if generators is not None:
        G = np.asarray(generators, dtype=float)
        coeffs = np.linalg.lstsq(G, value, rcond=None)[0]
        value = value - G @ coeffs
    residual = float(np.max(np.abs(value)))
    if residual > residual_tol:
        raise NotACriticalPointError(residual)

    lam = eigenvalues(fd_jacobian(field, point))
    count = int(np.sum(np.abs(lam) < zero_tol))
    if count < n_sym:
        logger.warning("zero eigenvalue multiplicity %d below the symmetry dimension %d", count, n_sym)
    return count


# -------------- trim anchoring and deviation --------------

def anchor_trim(ocp: ReducedOCP, result: SolveResult, sol: StaticSolution) -> TrimTrajectory:
    """
    Set g_bar(T/2) = g(T/2) at the grid node nearest T/2 and generate
    g_bar(t) = g_bar(T/2) exp((t - T/2) xi(y_bar, u_bar)) on the whole grid.
    """
    traj = result.trajectory if isinstance(result, SolveResult) else result
    if traj is None or traj.group is None:
        raise ValueError("anchor_trim needs a trajectory with reconstructed group motion")
    times = traj.times
    idx = int(np.argmin(np.abs(times - 0.5 * traj.horizon)))
    anchor = traj.group[idx]
    xi = np.asarray(ocp.group_velocity(sol.y_bar, sol.u_bar), dtype=float)
    group = [trim_flow(anchor, xi, float(t - times[idx])) for t in times]
    g0 = trim_flow(anchor, xi, -float(times[idx]))
    return TrimTrajectory(
        times=times.copy(), anchor_index=idx, xi=xi, group=group, g0=g0,
        y_bar=sol.y_bar, u_bar=sol.u_bar, p_bar=sol.p_bar,
    )


def deviation_series(result: SolveResult, sol: StaticSolution, trim: TrimTrajectory, include_adjoint: bool = True) -> DeviationSeries:
    """
    eps_red = |y - y_bar| + |p - p_bar| + |u - u_bar| (p term dropped when not
    requested or not available), eps_grp = group_distance(g, g_bar).
    """
    traj = result.trajectory if isinstance(result, SolveResult) else result
    if traj.times.shape != trim.times.shape or not np.allclose(traj.times, trim.times, rtol=0.0, atol=1e-12):
        raise DimensionError("trajectory and trim are not on the same time grid")
    use_adjoint = include_adjoint and traj.adjoints is not None
    if include_adjoint and traj.adjoints is None:
        logger.warning("no adjoints on the trajectory, reduced deviation omits the p term")

    eps = np.linalg.norm(traj.states - sol.y_bar, axis=1)
    eps += np.linalg.norm(traj.control_at_nodes() - sol.u_bar, axis=1)
    if use_adjoint:
        eps += np.linalg.norm(traj.adjoints - sol.p_bar, axis=1)

    if traj.group is not None:
        eps_grp = np.array([group_distance(g, gb) for g, gb in zip(traj.group, trim.group)])
    else:
        eps_grp = np.full(traj.times.size, np.nan)
    return DeviationSeries(times=traj.times.copy(), eps_red=eps, eps_grp=eps_grp, adjoint_included=use_adjoint)


# -------------- envelope fit --------------

def _line_fit(t: np.ndarray, logs: np.ndarray) -> Tuple[float, float, float]:
    """slope, intercept, r^2 (0 when the data have no variance)."""
    slope, intercept = np.polyfit(t, logs, 1)
    ss_tot = float(np.sum((logs - logs.mean()) ** 2))
    if ss_tot == 0.0:
        return float(slope), float(intercept), 0.0
    ss_res = float(np.sum((logs - (slope * t + intercept)) ** 2))
    return float(slope), float(intercept), float(np.clip(1.0 - ss_res / ss_tot, 0.0, 1.0))


def fit_envelope(
    times: np.ndarray,
    eps: np.ndarray,
    T: float,
    entry_window: Tuple[float, float] = (0.05, 0.45),
    exit_window: Tuple[float, float] = (0.55, 0.95),
    plateau_window: Tuple[float, float] = (0.4, 0.6),
) -> EnvelopeFit:
    """
    Log-linear fits of eps on the entry window (decay rate mu_in) and the exit
    window (growth rate mu_out); mu_hat = min of the two. Samples below the
    noise floor are dropped; fewer than 10 usable samples make the fit unreliable.
    """
    t = np.asarray(times, dtype=float)
    eps = np.asarray(eps, dtype=float)
    if np.any(eps < 0):
        raise ValueError("deviation series must be non-negative")

    def window(frac):
        mask = (t >= frac[0] * T) & (t <= frac[1] * T) & (eps >= NOISE_FLOOR) & np.isfinite(eps)
        return t[mask], np.log(eps[mask])

    t_in, l_in = window(entry_window)
    t_out, l_out = window(exit_window)
    reliable = t_in.size >= MIN_FIT_SAMPLES and t_out.size >= MIN_FIT_SAMPLES

    nan = float("nan")
    mu_in = C_in = r2_in = nan
    if t_in.size >= 2:
        slope, icpt, r2_in = _line_fit(t_in, l_in)
        mu_in, C_in = -slope, float(np.exp(icpt))
    mu_out = C_out = r2_out = nan
    if t_out.size >= 2:
        slope, icpt, r2_out = _line_fit(t_out, l_out)
        mu_out, C_out = slope, float(np.exp(icpt + slope * T))

    pmask = (t >= plateau_window[0] * T) & (t <= plateau_window[1] * T)
    plateau = float(np.max(eps[pmask])) if np.any(pmask) else nan

    fit = EnvelopeFit(
        C_hat=float(np.nanmax([C_in, C_out])) if np.isfinite([C_in, C_out]).any() else nan,
        mu_hat=float(np.nanmin([mu_in, mu_out])) if np.isfinite([mu_in, mu_out]).any() else nan,
        r_squared=float(np.nanmin([r2_in, r2_out])) if np.isfinite([r2_in, r2_out]).any() else 0.0,
        plateau=plateau,
        mu_in=mu_in, mu_out=mu_out, C_in=C_in, C_out=C_out, r2_in=r2_in, r2_out=r2_out,
        samples_in=int(t_in.size), samples_out=int(t_out.size), reliable=bool(reliable),
    )
    if not reliable:
        logger.warning("envelope fit unreliable: %d entry / %d exit samples", t_in.size, t_out.size)
    return fit


# -------------- end-to-end verdict --------------

def analyze_turnpike(
    ocp: ReducedOCP,
    sol: StaticSolution,
    result: SolveResult,
    hyperbolicity: HyperbolicityReport,
    include_adjoint: bool = True,
    entry_window: Tuple[float, float] = (0.05, 0.45),
    exit_window: Tuple[float, float] = (0.55, 0.95),
    plateau_window: Tuple[float, float] = (0.4, 0.6),
    plateau_tol: float = 1e-3,
    r2_min: float = 0.9,
) -> TurnpikeReport:
    """anchor_trim -> deviation_series -> fit_envelope, plus the verdict."""
    traj: Trajectory = result.trajectory
    trim = anchor_trim(ocp, result, sol)
    dev = deviation_series(result, sol, trim, include_adjoint)
    T = traj.horizon
    fit_red = fit_envelope(dev.times, dev.eps_red, T, entry_window, exit_window, plateau_window)
    fit_grp = fit_envelope(dev.times, dev.eps_grp, T, entry_window, exit_window, plateau_window)

    notes: List[str] = []
    if not dev.adjoint_included:
        notes.append("reduced deviation excludes the adjoint term")
    mu_ratio = fit_red.mu_hat / hyperbolicity.mu if hyperbolicity.mu and np.isfinite(hyperbolicity.mu) else float("nan")
    rate_consistent = bool(np.isfinite(mu_ratio) and 0.5 <= mu_ratio <= 2.0)

    measured = fit_red.decays(r2_min) and fit_red.plateau < plateau_tol
    if not hyperbolicity.hyperbolic:
        verdict = VERDICT_INCONCLUSIVE
        notes.append("linearization is not hyperbolic, envelope numbers are reported without a verdict")
    elif measured:
        verdict = VERDICT_POSITIVE
    else:
        verdict = VERDICT_NEGATIVE
    if np.isfinite(mu_ratio) and not rate_consistent:
        notes.append(f"fitted rate differs from the certified rate by a factor {mu_ratio:.3g}")

    logger.info(
        "turnpike %s: verdict=%s plateau=%.3e mu_hat=%.4g mu=%.4g r2=%.3f",
        ocp.name, verdict, fit_red.plateau, fit_red.mu_hat, hyperbolicity.mu, fit_red.r_squared,
    )
    return TurnpikeReport(
        hyperbolicity=hyperbolicity, trim=trim, deviation=dev, fit_red=fit_red, fit_grp=fit_grp,
        verdict=verdict, mu_ratio=float(mu_ratio), rate_consistent=rate_consistent, notes=notes,
    )
