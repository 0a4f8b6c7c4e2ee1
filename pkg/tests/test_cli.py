import json
import pathlib

import numpy as np
import pytest

import main
from src.adapters.run_config import RunConfig, load_config, parse_config
from src.adapters.trajectory_csv import read_trajectory_csv, write_trajectory_csv
from src.utils.errors import ConfigError
from src.utils.integrator import ControlGrid, reconstruct_group, rollout

ROOT = pathlib.Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "static"

ON_TRIM = {
    "system": {"problem": "kepler", "y0": [4.5, 0.0, float(np.sqrt(1.0 / 4.5 ** 3))], "s_T": 4.5},
    "solver": {"N": 40},
    "analysis": {"include_adjoint": False},
}


def _write(tmp_path, name, payload) -> str:
    path = tmp_path / name
    path.write_text(json.dumps(payload), encoding="utf-8")
    return str(path)


def _read_json(path) -> dict:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


# -------------- configuration --------------

def test_default_config_is_kepler():
    cfg = load_config(None)
    assert cfg.problem == "kepler"
    assert cfg.solver_config().N == 200
    assert cfg.plateau_tol == 1e-3
    assert cfg.include_adjoint


@pytest.mark.parametrize("name", ["kepler", "rigid_body", "rotors"])
def test_shipped_configs_validate(name):
    cfg = load_config(CONFIGS / f"{name}.json")
    assert cfg.problem == name
    assert cfg.build_ocp().name == name


@pytest.mark.parametrize("name", ["rigid_body", "rotors"])
def test_non_kepler_problems_leave_out_adjoint_by_default(name):
    cfg = parse_config({"system": {"problem": name}})
    assert not cfg.include_adjoint
    assert cfg.plateau_tol == 1e-2
    assert cfg.solver_config().N == 300


@pytest.mark.parametrize("payload", [
    {"system": {"problem": "rigid_body", "inertia": [1.0, -5.0, 10.0]}},
    {"system": {"problem": "kepler", "mass": 2.0}},
    {"system": {"problem": "pendulum"}},
    {"solver": {"penalty_growth": 1.0}},
    {"analysis": {"entry_window": [0.5, 0.2]}},
    {"output": {"seed": -1}},
    {"plots": True},
])
def test_invalid_configs_raise_config_error(payload):
    with pytest.raises(ConfigError):
        parse_config(payload)


def test_invalid_config_exits_with_code_2(tmp_path):
    path = _write(tmp_path, "bad.json", {"system": {"problem": "rigid_body", "inertia": [1.0, -5.0, 10.0]}})
    assert main.main(["static", "--config", path, "--out", str(tmp_path / "out")]) == main.EXIT_CONFIG
    assert main.main(["static", "--config", str(tmp_path / "missing.json")]) == main.EXIT_CONFIG


def test_config_is_frozen():
    cfg = RunConfig()
    with pytest.raises(Exception):
        cfg.output.seed = 3


# -------------- subcommands --------------

def test_static_command(tmp_path):
    out = tmp_path / "static"
    assert main.main(["static", "--config", str(CONFIGS / "kepler.json"), "--out", str(out)]) == main.EXIT_OK
    payload = _read_json(out / "static.json")
    assert payload["problem"] == "kepler"
    assert payload["converged"]
    assert payload["y_bar"]["s"] == pytest.approx(4.5, abs=1e-10)
    assert payload["y_bar"]["v_theta"] == pytest.approx(0.1047565, abs=1e-7)


def test_analyze_command(tmp_path):
    out = tmp_path / "analyze"
    configs = [str(CONFIGS / f"{name}.json") for name in ("kepler", "rotors")]
    assert main.main(["analyze", "--config", configs[0], "--config", configs[1], "--out", str(out)]) == main.EXIT_OK
    kepler = _read_json(out / "kepler" / "analyze.json")
    rotors = _read_json(out / "rotors" / "analyze.json")
    assert kepler["hyperbolic"] and kepler["kalman_rank"] == 3
    assert len(kepler["eigenvalues"]) == 6
    assert not rotors["hyperbolic"] and rotors["zero_count"] >= 1


def test_solve_command_writes_round_trippable_csv(tmp_path):
    path = _write(tmp_path, "on_trim.json", ON_TRIM)
    out = tmp_path / "solve"
    assert main.main(["solve", "--config", path, "--out", str(out)]) == main.EXIT_OK
    report = _read_json(out / "solve.json")
    assert report["status"] == "converged"
    assert report["constraint_violation"] < 1e-8

    traj = read_trajectory_csv(str(out / "trajectory.csv"))
    assert traj.states.shape == (41, 3)
    assert traj.controls.shape == (40, 2)
    assert traj.adjoints is not None and len(traj.group) == 41

    again = write_trajectory_csv(traj, str(tmp_path / "again.csv"))
    assert pathlib.Path(again).read_bytes() == (out / "trajectory.csv").read_bytes()


def test_csv_round_trip_is_bit_exact(rigid_body, rng, tmp_path):
    grid = ControlGrid(rng.normal(scale=0.1, size=(30, 3)), rigid_body.horizon)
    traj = reconstruct_group(rigid_body, rollout(rigid_body, grid))
    back = read_trajectory_csv(write_trajectory_csv(traj, str(tmp_path / "t.csv")))
    assert np.array_equal(back.times, traj.times)
    assert np.array_equal(back.states, traj.states)
    assert np.array_equal(back.controls, traj.controls)
    assert np.array_equal(back.running_cost, traj.running_cost)
    for a, b in zip(back.group, traj.group):
        assert np.array_equal(a.as_vector(), b.as_vector())
    header = (tmp_path / "t.csv").read_text(encoding="utf-8").splitlines()[0].split(",")
    assert header[:7] == ["t", "y_1", "y_2", "y_3", "u_1", "u_2", "u_3"]
    assert {"q1_w", "q1_x", "q1_y", "q1_z", "r1_x", "r1_y", "r1_z", "cost"} <= set(header)


def test_turnpike_command_is_deterministic(tmp_path):
    path = _write(tmp_path, "on_trim.json", ON_TRIM)
    first, second = tmp_path / "a", tmp_path / "b"
    for out in (first, second):
        assert main.main(["turnpike", "--config", path, "--out", str(out), "--svg"]) == main.EXIT_OK
    for name in ("trajectory.csv", "deviation.csv", "turnpike.json", "states.svg", "deviation.svg"):
        assert (first / name).read_bytes() == (second / name).read_bytes()
    report = _read_json(first / "turnpike.json")
    assert report["verdict"] == "negative"
    assert report["hyperbolic"]
    assert report["stages_completed"][-1] == "fit_envelope"


def test_diverged_rollout_exit_code(tmp_path):
    payload = {"system": {"problem": "kepler", "y0": [0.5, -2.0, 0.0], "T": 40.0}, "solver": {"N": 10}}
    path = _write(tmp_path, "crash.json", payload)
    assert main.main(["solve", "--config", path, "--out", str(tmp_path / "crash")]) == main.EXIT_DIVERGED
    report = _read_json(tmp_path / "crash" / "solve.json")
    assert report["status"] == "diverged"


def test_post_solve_failure_is_reported_as_stage(tmp_path, monkeypatch):
    def broken(ocp, result):
        raise FloatingPointError("overflow in adjoint sweep")

    monkeypatch.setattr(main, "pmp_residual", broken)
    path = _write(tmp_path, "on_trim.json", ON_TRIM)
    out = tmp_path / "broken"
    assert main.main(["solve", "--config", path, "--out", str(out)]) == main.EXIT_STAGE_FAILED
    report = _read_json(out / "solve.json")
    assert report["status"] == "failed"
    assert report["stage"] == "pmp_residual"
    assert report["error"] == "FloatingPointError"
    assert report["stages_completed"] == ["static", "solve"]
    assert not (out / "trajectory.csv").exists()


@pytest.mark.slow
def test_check_command(tmp_path):
    assert main.main(["check", "--out", str(tmp_path), "--seed", "7"]) == main.EXIT_OK
    report = _read_json(tmp_path / "check_report.json")
    assert report["seed"] == 7
    assert report["passed"]
