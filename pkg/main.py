# main.py
from __future__ import annotations
import argparse
import logging
import os
import pathlib
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import List, Optional

from dotenv import load_dotenv

from src.adapters.report_mapper import (
    checks_to_dict,
    failure_to_dict,
    hyperbolicity_to_dict,
    solve_to_dict,
    static_to_dict,
    turnpike_to_dict,
    write_json,
)
from src.adapters.run_config import RunConfig, load_config
from src.adapters.trajectory_csv import write_deviation_csv, write_trajectory_csv
from src.utils import (
    ConfigError,
    DivergedRolloutError,
    PipelineStageError,
    SingularMatrixError,
    TurnpikeLabError,
    analyze_turnpike,
    certify,
    pmp_residual,
    reconstruct_group,
    run_checks,
    solve,
    solve_static,
)
from src.utils.ocp_solver import STATUS_CONVERGED, STATUS_DIVERGED

load_dotenv()

TPL_LOG = os.getenv("TPL_LOG", "info").lower()
RESULTS_DIR = os.getenv("TPL_RESULTS_DIR", "results")

EXIT_OK = 0
EXIT_STAGE_FAILED = 1
EXIT_CONFIG = 2
EXIT_STALLED = 3
EXIT_DIVERGED = 4

logger = logging.getLogger("tpl")


def _setup_logging(level: str) -> None:
    if level == "off":
        logging.disable(logging.CRITICAL)
        return
    logging.basicConfig(
        level=logging.DEBUG if level == "debug" else logging.INFO,
        format='%(asctime)s - %(levelname)s - %(message)s',
    )


def _status_exit(status: str) -> int:
    if status == STATUS_CONVERGED:
        return EXIT_OK
    return EXIT_DIVERGED if status == STATUS_DIVERGED else EXIT_STALLED


def _stage(name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except TurnpikeLabError as exc:
        raise PipelineStageError(name, exc) from exc
    except (ArithmeticError, ValueError, AssertionError) as exc:
        raise PipelineStageError(name, exc) from exc


def _fail(out_dir: str, filename: str, err: PipelineStageError, stages: Optional[List[str]] = None) -> int:
    payload = failure_to_dict(err.stage, err.cause, stages)
    if err.stage == "certify" and isinstance(err.cause, SingularMatrixError):
        payload["status"] = "hypothesis_1_failed"
    path = write_json(payload, os.path.join(out_dir, filename))
    print(f"❌ Stage '{err.stage}' failed: {err.cause} (details in {path})")
    if isinstance(err.cause, DivergedRolloutError):
        return EXIT_DIVERGED
    return EXIT_STAGE_FAILED


# -------------- subcommands --------------

def cmd_static(cfg: RunConfig, out_dir: str) -> int:
    ocp = cfg.build_ocp()
    try:
        sol = _stage("static", solve_static, ocp)
    except PipelineStageError as err:
        return _fail(out_dir, "static.json", err)
    payload = static_to_dict(ocp, sol)
    path = write_json(payload, os.path.join(out_dir, "static.json"))
    print(f"y_bar = {payload['y_bar']}")
    print(f"u_bar = {payload['u_bar']}")
    print(f"✅ Saved static solution to {path} (residuals {sol.residual_dyn:.2e} / {sol.residual_kkt:.2e})")
    return EXIT_OK


def cmd_analyze(cfg: RunConfig, out_dir: str) -> int:
    ocp = cfg.build_ocp()
    try:
        sol = _stage("static", solve_static, ocp)
        lin, report = _stage("certify", certify, ocp, sol, cfg.analysis.zero_tol)
    except PipelineStageError as err:
        return _fail(out_dir, "analyze.json", err)
    payload = {"problem": ocp.name, "static": static_to_dict(ocp, sol), **hyperbolicity_to_dict(lin, report)}
    path = write_json(payload, os.path.join(out_dir, "analyze.json"))
    print(f"hyperbolic={report.hyperbolic} mu={report.mu:.6g} zero_count={report.zero_count} "
          f"kalman_rank={report.kalman_rank}/{report.state_dim}")
    print(f"✅ Saved hyperbolicity report to {path}")
    return EXIT_OK


def cmd_solve(cfg: RunConfig, out_dir: str) -> int:
    ocp = cfg.build_ocp()
    try:
        sol = _stage("static", solve_static, ocp)
        result = _stage("solve", solve, ocp, cfg.solver_config(), sol.u_bar)
    except PipelineStageError as err:
        return _fail(out_dir, "solve.json", err)
    if result.trajectory is None:
        write_json(solve_to_dict(ocp, result), os.path.join(out_dir, "solve.json"))
        print(f"❌ Rollout diverged: {result.message}")
        return EXIT_DIVERGED
    try:
        traj = _stage("reconstruct", reconstruct_group, ocp, result.trajectory)
        pmp = _stage("pmp_residual", pmp_residual, ocp, result)
    except PipelineStageError as err:
        return _fail(out_dir, "solve.json", err, ["static", "solve"])

    csv_path = write_trajectory_csv(traj, os.path.join(out_dir, "trajectory.csv"))
    json_path = write_json(solve_to_dict(ocp, result, pmp), os.path.join(out_dir, "solve.json"))
    print(f"status={result.status} cost={traj.cost:.10g} |c|={result.constraint_violation:.2e} pmp={pmp:.2e}")
    print(f"✅ Saved {len(traj.times)} rows to {csv_path}")
    print(f"✅ Saved solver report to {json_path}")
    return _status_exit(result.status)


def cmd_turnpike(cfg: RunConfig, out_dir: str) -> int:
    ocp = cfg.build_ocp()
    stages: List[str] = []
    try:
        sol = _stage("static", solve_static, ocp)
        stages.append("static")
        lin, hyp = _stage("certify", certify, ocp, sol, cfg.analysis.zero_tol)
        stages.append("certify")
        result = _stage("solve", solve, ocp, cfg.solver_config(), sol.u_bar)
        if result.trajectory is None:
            raise PipelineStageError("solve", DivergedRolloutError(0, result.message))
        stages.append("solve")
        traj = _stage("reconstruct", reconstruct_group, ocp, result.trajectory)
        result.trajectory = traj
        stages.append("reconstruct")
        report = _stage(
            "envelope", analyze_turnpike, ocp, sol, result, hyp,
            include_adjoint=cfg.include_adjoint,
            entry_window=cfg.analysis.entry_window,
            exit_window=cfg.analysis.exit_window,
            plateau_window=cfg.analysis.plateau_window,
            plateau_tol=cfg.plateau_tol,
            r2_min=cfg.analysis.r2_min,
        )
        stages += ["anchor_trim", "deviation_series", "fit_envelope"]
        pmp = _stage("pmp_residual", pmp_residual, ocp, result)
    except PipelineStageError as err:
        return _fail(out_dir, "turnpike.json", err, stages)

    write_trajectory_csv(traj, os.path.join(out_dir, "trajectory.csv"))
    dev_path = write_deviation_csv(report.deviation, report.fit_red, traj.horizon, os.path.join(out_dir, "deviation.csv"))
    payload = turnpike_to_dict(ocp, report, stages)
    payload["solver"] = solve_to_dict(ocp, result, pmp)
    payload["certification"] = hyperbolicity_to_dict(lin, hyp)
    path = write_json(payload, os.path.join(out_dir, "turnpike.json"))
    if cfg.output.emit_svg:
        from src.adapters.svg_plots import write_turnpike_plots
        plots = write_turnpike_plots(ocp, traj, report.trim, report.deviation, report.fit_red, out_dir)
        print(f"✅ Saved {len(plots)} SVG plots to {out_dir}")

    print(f"verdict={report.verdict} plateau={report.fit_red.plateau:.3e} "
          f"mu_hat={report.fit_red.mu_hat:.4g} mu={hyp.mu:.4g}")
    print(f"✅ Saved deviation series to {dev_path}")
    print(f"✅ Saved turnpike report to {path}")
    return _status_exit(result.status)


def cmd_check(cfg: RunConfig, out_dir: str) -> int:
    seed = cfg.output.seed
    results = run_checks(seed)
    payload = checks_to_dict(results, seed)
    path = write_json(payload, os.path.join(out_dir, "check_report.json"))
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed" + (f"; failed: {', '.join(failed)}" if failed else ""))
    print(f"✅ Saved check report to {path}")
    return EXIT_OK if not failed else EXIT_STAGE_FAILED


COMMANDS = {
    "static": cmd_static,
    "analyze": cmd_analyze,
    "solve": cmd_solve,
    "turnpike": cmd_turnpike,
    "check": cmd_check,
}


# -------------- runner --------------

def _apply_overrides(cfg: RunConfig, svg: bool, seed: Optional[int]) -> RunConfig:
    output = cfg.output
    if svg:
        output = output.model_copy(update={"emit_svg": True})
    if seed is not None:
        if not 0 <= seed < 2 ** 64:
            raise ConfigError(f"--seed must be an unsigned 64-bit integer, got {seed}")
        output = output.model_copy(update={"seed": seed})
    return cfg.model_copy(update={"output": output})


def run(command: str, config_path: Optional[str], out: Optional[str], svg: bool, seed: Optional[int], sub_dir: bool) -> int:
    try:
        cfg = _apply_overrides(load_config(config_path), svg, seed)
    except ConfigError as exc:
        print(f"❌ Invalid configuration {config_path}: {exc}")
        return EXIT_CONFIG
    out_dir = out or cfg.output.directory or RESULTS_DIR
    if sub_dir and config_path:
        out_dir = os.path.join(out_dir, pathlib.Path(config_path).stem)
    os.makedirs(out_dir, exist_ok=True)
    logger.info("running %s for %s into %s", command, cfg.problem, out_dir)
    try:
        return COMMANDS[command](cfg, out_dir)
    except ConfigError as exc:
        print(f"❌ Invalid configuration {config_path}: {exc}")
        return EXIT_CONFIG


def _worker(args) -> int:
    _setup_logging(TPL_LOG)
    return run(*args)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tpl", description="Turnpike lab for symmetry-reduced optimal control problems.")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", action="append", default=None,
                        help="run configuration JSON (repeatable; defaults to the built-in Kepler setup)")
    parser.add_argument("--out", default=None, help="output directory (overrides output.directory and TPL_RESULTS_DIR)")
    parser.add_argument("--svg", action="store_true", help="also write SVG plots")
    parser.add_argument("--seed", type=int, default=None, help="seed for randomized checks")
    parser.add_argument("--jobs", type=int, default=1, help="run several configs in parallel processes")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    _setup_logging(TPL_LOG)
    configs = args.config or [None]
    sub_dir = len(configs) > 1
    jobs = [(args.command, path, args.out, args.svg, args.seed, sub_dir) for path in configs]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            codes = list(pool.map(_worker, jobs))
    else:
        codes = [run(*job) for job in jobs]
    return max(codes)


if __name__ == "__main__":
    sys.exit(main())
