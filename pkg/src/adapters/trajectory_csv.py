# src/adapters/trajectory_csv.py
"""
Trajectory and deviation CSV files.

Numbers are written with repr(), the shortest string that parses back to the
same double, and read back with the round-trip float parser, so a written
trajectory re-parses bit-exactly.
"""
from __future__ import annotations
import os
import re
from typing import List, Optional

import numpy as np
import pandas as pd

from src.utils.errors import DimensionError
from src.utils.integrator import Trajectory
from src.utils.lie_groups import GroupElement, GroupSignature, body_frame_vector
from src.utils.turnpike_analysis import DeviationSeries, EnvelopeFit

# -------------- helpers --------------

def _fmt(value) -> str:
    if value is None or (isinstance(value, float) and np.isnan(value)):
        return ""
    return repr(float(value))


def _to_csv(frame: pd.DataFrame, path: str) -> str:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    text = frame.apply(lambda col: col.map(_fmt))
    text.to_csv(path, index=False, lineterminator="\n")
    return path


def _numbered(frame: pd.DataFrame, prefix: str) -> List[str]:
    pattern = re.compile(rf"^{prefix}_(\d+)$")
    cols = [c for c in frame.columns if pattern.match(c)]
    return sorted(cols, key=lambda c: int(pattern.match(c).group(1)))


# -------------- trajectories --------------

def group_columns(signature: GroupSignature) -> List[str]:
    cols = [f"q{i + 1}_{c}" for i in range(signature.n_so3) for c in "wxyz"]
    return cols + [f"theta_{i + 1}" for i in range(signature.n_s1)]


def trajectory_frame(traj: Trajectory) -> pd.DataFrame:
    """t, y_i, u_i (blank on the last node), p_i, group columns, R^T(1,1,1) columns, cumulative cost."""
    n, m = traj.states.shape[1], traj.controls.shape[1]
    data = {"t": traj.times}
    for i in range(n):
        data[f"y_{i + 1}"] = traj.states[:, i]
    controls = np.vstack([traj.controls, np.full((1, m), np.nan)])
    for i in range(m):
        data[f"u_{i + 1}"] = controls[:, i]
    if traj.adjoints is not None:
        for i in range(n):
            data[f"p_{i + 1}"] = traj.adjoints[:, i]
    if traj.group is not None:
        sig = traj.group[0].signature
        values = np.array([g.as_vector() for g in traj.group])
        for j, name in enumerate(group_columns(sig)):
            data[name] = values[:, j]
        for f in range(sig.n_so3):
            r = np.array([body_frame_vector(g.quaternions[f]) for g in traj.group])
            for j, c in enumerate("xyz"):
                data[f"r{f + 1}_{c}"] = r[:, j]
    data["cost"] = traj.running_cost
    return pd.DataFrame(data)


def write_trajectory_csv(traj: Trajectory, path: str) -> str:
    return _to_csv(trajectory_frame(traj), path)


def read_trajectory_csv(path: str, substeps: int = 4) -> Trajectory:
    frame = pd.read_csv(path, float_precision="round_trip")
    y_cols, u_cols, p_cols = _numbered(frame, "y"), _numbered(frame, "u"), _numbered(frame, "p")
    if not y_cols or not u_cols:
        raise DimensionError(f"{path} has no state or control columns")
    n_so3 = len([c for c in frame.columns if re.match(r"^q\d+_w$", c)])
    n_s1 = len(_numbered(frame, "theta"))

    group: Optional[List[GroupElement]] = None
    if n_so3 or n_s1:
        sig = GroupSignature(n_so3, n_s1)
        values = frame[group_columns(sig)].to_numpy(dtype=float)
        group = [GroupElement.from_vector(row, sig) for row in values]

    return Trajectory(
        times=frame["t"].to_numpy(dtype=float),
        states=frame[y_cols].to_numpy(dtype=float),
        controls=frame[u_cols].to_numpy(dtype=float)[:-1],
        running_cost=frame["cost"].to_numpy(dtype=float),
        substeps=substeps,
        adjoints=frame[p_cols].to_numpy(dtype=float) if p_cols else None,
        group=group,
    )


# -------------- deviation series --------------

def write_deviation_csv(dev: DeviationSeries, fit: EnvelopeFit, horizon: float, path: str) -> str:
    frame = pd.DataFrame({
        "t": dev.times,
        "eps_red": dev.eps_red,
        "eps_grp": dev.eps_grp,
        "envelope": fit.envelope(dev.times, horizon),
    })
    return _to_csv(frame, path)
