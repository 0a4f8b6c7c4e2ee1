# src/adapters/report_mapper.py
from __future__ import annotations
import json
import math
import os
from typing import Any, Dict, List, Optional

import numpy as np

from src.utils.lie_groups import GroupElement
from src.utils.ocp_solver import SolveResult
from src.utils.reduced_systems import ReducedOCP
from src.utils.self_checks import CheckResult
from src.utils.static_solver import StaticSolution
from src.utils.turnpike_analysis import EnvelopeFit, HyperbolicityReport, LinearizationResult, TurnpikeReport

# -------------- helpers --------------

def _clean(value: Any) -> Any:
    """numpy -> builtin, non-finite floats -> None (strict JSON)."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return _clean(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        f = float(value)
        return f if math.isfinite(f) else None
    return value


def _labelled(labels, values) -> Dict[str, float]:
    values = np.asarray(values, dtype=float)
    labels = labels or [f"x_{i + 1}" for i in range(values.size)]
    return {name: float(v) for name, v in zip(labels, values)}


def group_to_dict(g: GroupElement) -> Dict[str, list]:
    return {"quaternions": [q.tolist() for q in g.quaternions], "angles": g.angles.tolist()}


# -------------- mappers --------------

def static_to_dict(ocp: ReducedOCP, sol: StaticSolution) -> Dict[str, Any]:
    return {
        "problem": ocp.name,
        "y_bar": _labelled(ocp.state_labels, sol.y_bar),
        "u_bar": _labelled(ocp.control_labels, sol.u_bar),
        "p_bar": _labelled([f"p_{n}" for n in ocp.state_labels], sol.p_bar),
        "xi_bar": np.asarray(ocp.group_velocity(sol.y_bar, sol.u_bar)).tolist(),
        "residual_dyn": sol.residual_dyn,
        "residual_kkt": sol.residual_kkt,
        "iterations": sol.iterations,
        "converged": sol.converged,
    }


def hyperbolicity_to_dict(lin: LinearizationResult, report: HyperbolicityReport) -> Dict[str, Any]:
    eig = lin.eigenvalues if lin.eigenvalues is not None else np.zeros(0, dtype=complex)
    return {
        "eigenvalues": [[float(z.real), float(z.imag)] for z in eig],
        "hyperbolic": report.hyperbolic,
        "mu": report.mu,
        "min_abs_real": report.min_abs_real,
        "zero_count": report.zero_count,
        "zero_tol": report.zero_tol,
        "kalman_rank": report.kalman_rank,
        "state_dim": report.state_dim,
        "Huu_negdef": report.Huu_negdef,
        "W_posdef": report.W_posdef,
        "pairing_error": report.pairing_error,
        "hypotheses_hold": report.hypotheses_hold,
        "H_uu": lin.H_uu,
        "A": lin.A,
        "B": lin.B,
        "W": lin.W,
    }


def solve_to_dict(ocp: ReducedOCP, result: SolveResult, pmp: Optional[float] = None) -> Dict[str, Any]:
    traj = result.trajectory
    return {
        "problem": ocp.name,
        "status": result.status,
        "cost": traj.cost if traj is not None else None,
        "final_state": _labelled(ocp.state_labels, traj.states[-1]) if traj is not None else None,
        "multipliers": result.multipliers,
        "stationarity": result.stationarity,
        "constraint_violation": result.constraint_violation,
        "pmp_residual": pmp,
        "outer_iterations": result.outer_iterations,
        "inner_iterations": result.inner_iterations,
        "constraint_history": result.history.get("constraint", []),
        "penalty_history": result.history.get("penalty", []),
        "message": result.message,
    }


def envelope_to_dict(fit: EnvelopeFit) -> Dict[str, Any]:
    return {
        "C_hat": fit.C_hat,
        "mu_hat": fit.mu_hat,
        "r_squared": fit.r_squared,
        "plateau": fit.plateau,
        "entry": {"mu": fit.mu_in, "C": fit.C_in, "r_squared": fit.r2_in, "samples": fit.samples_in},
        "exit": {"mu": fit.mu_out, "C": fit.C_out, "r_squared": fit.r2_out, "samples": fit.samples_out},
        "reliable": fit.reliable,
    }


def turnpike_to_dict(ocp: ReducedOCP, report: TurnpikeReport, stages: List[str]) -> Dict[str, Any]:
    trim = report.trim
    return {
        "problem": ocp.name,
        "verdict": report.verdict,
        "mu_certified": report.hyperbolicity.mu,
        "mu_fitted": report.fit_red.mu_hat,
        "mu_ratio": report.mu_ratio,
        "rate_consistent": report.rate_consistent,
        "C_hat": report.fit_red.C_hat,
        "plateau": report.fit_red.plateau,
        "hyperbolic": report.hyperbolicity.hyperbolic,
        "zero_count": report.hyperbolicity.zero_count,
        "adjoint_included": report.deviation.adjoint_included,
        "reduced_fit": envelope_to_dict(report.fit_red),
        "group_fit": envelope_to_dict(report.fit_grp),
        "trim": {
            "anchor_time": trim.anchor_time,
            "xi": trim.xi,
            "g_anchor": group_to_dict(trim.group[trim.anchor_index]),
            "g0": group_to_dict(trim.g0),
        },
        "stages_completed": stages,
        "notes": report.notes,
    }


def checks_to_dict(results: List[CheckResult], seed: int) -> Dict[str, Any]:
    return {
        "seed": seed,
        "passed": all(r.passed for r in results),
        "checks": [
            {"name": r.name, "passed": r.passed, "value": r.value, "threshold": r.threshold, "detail": r.detail}
            for r in results
        ],
    }


def failure_to_dict(stage: str, exc: BaseException, stages: Optional[List[str]] = None) -> Dict[str, Any]:
    payload = {"status": "failed", "stage": stage, "error": type(exc).__name__, "message": str(exc)}
    for attr in ("condition", "residuals", "interval"):
        if hasattr(exc, attr):
            payload[attr] = getattr(exc, attr)
    if stages is not None:
        payload["stages_completed"] = stages
    return payload


def write_json(payload: Dict[str, Any], path: str) -> str:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(_clean(payload), f, ensure_ascii=False, indent=2)
        f.write("\n")
    return path
