# src/adapters/svg_plots.py
"""
SVG views of trajectories, trims and deviation series. Plots only read the
arrays they are given; they never feed anything back into the numbers.
"""
from __future__ import annotations
import os
from typing import List

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from src.utils.integrator import Trajectory  # noqa: E402
from src.utils.lie_groups import body_frame_vector  # noqa: E402
from src.utils.reduced_systems import ReducedOCP  # noqa: E402
from src.utils.turnpike_analysis import DeviationSeries, EnvelopeFit, TrimTrajectory  # noqa: E402

# fixed ids and no timestamp so reruns give identical files
plt.rcParams["svg.hashsalt"] = "tpl"
plt.rcParams["svg.fonttype"] = "path"
SVG_METADATA = {"Date": None}


def _save(fig, path: str) -> str:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    fig.savefig(path, format="svg", metadata=SVG_METADATA, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_states_vs_trim(ocp: ReducedOCP, traj: Trajectory, trim: TrimTrajectory, path: str) -> str:
    """One panel per state and control component, dashed line at the static value."""
    n, m = ocp.state_dim, ocp.control_dim
    rows = n + m
    fig, axes = plt.subplots(rows, 1, figsize=(7, 1.6 * rows), sharex=True)
    labels = list(ocp.state_labels) + list(ocp.control_labels)
    series = [traj.states[:, i] for i in range(n)] + [traj.control_at_nodes()[:, i] for i in range(m)]
    refs = list(trim.y_bar) + list(trim.u_bar)
    for ax, label, values, ref in zip(axes, labels, series, refs):
        ax.plot(traj.times, values, lw=1.2, label="optimal")
        ax.axhline(ref, color="k", ls="--", lw=0.8, label="turnpike")
        ax.set_ylabel(label)
        ax.grid(alpha=0.3)
    axes[0].legend(loc="upper right", fontsize=8)
    axes[-1].set_xlabel("t")
    return _save(fig, path)


def plot_deviation(dev: DeviationSeries, fit: EnvelopeFit, horizon: float, path: str) -> str:
    fig, ax = plt.subplots(figsize=(7, 4))
    floor = 1e-16
    ax.semilogy(dev.times, np.maximum(dev.eps_red, floor), label="reduced deviation")
    if np.all(np.isfinite(dev.eps_grp)):
        ax.semilogy(dev.times, np.maximum(dev.eps_grp, floor), label="group deviation")
    if np.isfinite(fit.mu_hat) and np.isfinite(fit.C_hat):
        ax.semilogy(dev.times, fit.envelope(dev.times, horizon), "k--", lw=0.8,
                    label=f"C(e^(-mu t) + e^(-mu (T-t))), mu={fit.mu_hat:.3g}")
    ax.set_xlabel("t")
    ax.grid(alpha=0.3, which="both")
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_group_vs_trim(ocp: ReducedOCP, traj: Trajectory, trim: TrimTrajectory, path: str) -> str:
    """Angles for torus factors, R^T (1,1,1) components for rotation factors."""
    sig = ocp.signature
    rows = 3 * sig.n_so3 + sig.n_s1
    fig, axes = plt.subplots(rows, 1, figsize=(7, 1.6 * rows), sharex=True, squeeze=False)
    axes = axes[:, 0]
    row = 0
    for f in range(sig.n_so3):
        r = np.array([body_frame_vector(g.quaternions[f]) for g in traj.group])
        rb = np.array([body_frame_vector(g.quaternions[f]) for g in trim.group])
        for j, c in enumerate("xyz"):
            axes[row].plot(traj.times, r[:, j], lw=1.2)
            axes[row].plot(trim.times, rb[:, j], "k--", lw=0.8)
            axes[row].set_ylabel(f"(R{f + 1}^T 1)_{c}")
            row += 1
    for i in range(sig.n_s1):
        axes[row].plot(traj.times, [g.angles[i] for g in traj.group], lw=1.2)
        axes[row].plot(trim.times, [g.angles[i] for g in trim.group], "k--", lw=0.8)
        axes[row].set_ylabel(f"theta_{i + 1}")
        row += 1
    axes[-1].set_xlabel("t")
    return _save(fig, path)


def plot_projection(ocp: ReducedOCP, traj: Trajectory, trim: TrimTrajectory, path: str) -> str:
    """
    Kepler: orbit in the plane (s cos theta, s sin theta) against the trim circle.
    Rotation groups: (y, z) projection of the curve R^T (1,1,1) against the trim.
    """
    fig, ax = plt.subplots(figsize=(5, 5))
    if ocp.signature.n_so3 == 0:
        s = traj.states[:, 0]
        theta = np.array([g.angles[0] for g in traj.group])
        theta_bar = np.array([g.angles[0] for g in trim.group])
        ax.plot(s * np.cos(theta), s * np.sin(theta), lw=1.2, label="optimal")
        ax.plot(trim.y_bar[0] * np.cos(theta_bar), trim.y_bar[0] * np.sin(theta_bar), "k--", lw=0.8, label="trim")
        ax.set_xlabel("s cos(theta)")
        ax.set_ylabel("s sin(theta)")
    else:
        r = np.array([body_frame_vector(g.quaternions[0]) for g in traj.group])
        rb = np.array([body_frame_vector(g.quaternions[0]) for g in trim.group])
        ax.plot(r[:, 1], r[:, 2], lw=1.2, label="optimal")
        ax.plot(rb[:, 1], rb[:, 2], "k--", lw=0.8, label="trim")
        ax.set_xlabel("(R^T 1)_y")
        ax.set_ylabel("(R^T 1)_z")
    ax.set_aspect("equal", adjustable="datalim")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    return _save(fig, path)


def write_turnpike_plots(ocp: ReducedOCP, traj: Trajectory, trim: TrimTrajectory,
                         dev: DeviationSeries, fit: EnvelopeFit, out_dir: str) -> List[str]:
    return [
        plot_states_vs_trim(ocp, traj, trim, os.path.join(out_dir, "states.svg")),
        plot_group_vs_trim(ocp, traj, trim, os.path.join(out_dir, "group.svg")),
        plot_projection(ocp, traj, trim, os.path.join(out_dir, "projection.svg")),
        plot_deviation(dev, fit, traj.horizon, os.path.join(out_dir, "deviation.svg")),
    ]
