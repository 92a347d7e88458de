"""Figure rendering for run and comparison reports.

Figures are written to files next to the CSV traces; nothing interactive.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .model import PlantModel
from .sim import Trajectory

__all__ = ["render_run", "render_comparison"]

_KIND_STYLE = {
    "RG_NL": {"color": "tab:green", "ls": "-"},
    "RG_L": {"color": "tab:blue", "ls": "--"},
    "NONE": {"color": "tab:red", "ls": "-."},
}


def _state_bounds(model: PlantModel):
    """Per-state (lo, hi) pairs recovered from box constraint sets."""
    if model.X.is_box:
        return list(zip(model.X.lo, model.X.hi))
    return [(None, None)] * model.n


def render_run(traj: Trajectory, model: PlantModel, r_of_t, path) -> None:
    """States with constraint lines, plus commands against the reference."""
    n, n_v = model.n, model.n_v
    rows = n + n_v
    fig, axes = plt.subplots(rows, 1, sharex=True, figsize=(7.0, 1.7 * rows))
    axes = np.atleast_1d(axes)
    bounds = _state_bounds(model)
    t = traj.times
    for i in range(n):
        ax = axes[i]
        ax.plot(t, traj.states[:, i], color="tab:green", lw=1.0)
        lo, hi = bounds[i]
        if lo is not None:
            ax.axhline(lo, color="k", ls="--", lw=0.8)
            ax.axhline(hi, color="k", ls="--", lw=0.8)
        ax.set_ylabel(f"x{i + 1}")
    r_vals = np.array([np.atleast_1d(r_of_t(tk)) for tk in t])
    for j in range(n_v):
        ax = axes[n + j]
        ax.plot(t, traj.commands[:, j], color="tab:green", lw=1.0, label="v")
        ax.plot(t, r_vals[:, j], color="k", ls=":", lw=0.9, label="r")
        ax.set_ylabel(f"v{j + 1}")
        if j == 0:
            ax.legend(loc="best", fontsize=8)
    axes[-1].set_xlabel("t [s]")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def render_comparison(trajs: dict, model: PlantModel, r_of_t, path) -> None:
    """Overlay state and command traces for several governor kinds."""
    n, n_v = model.n, model.n_v
    rows = n + n_v
    fig, axes = plt.subplots(rows, 1, sharex=True, figsize=(7.0, 1.7 * rows))
    axes = np.atleast_1d(axes)
    bounds = _state_bounds(model)
    for kind, traj in trajs.items():
        style = _KIND_STYLE.get(kind, {})
        t = traj.times
        for i in range(n):
            axes[i].plot(t, traj.states[:, i], lw=1.0, label=kind, **style)
        for j in range(n_v):
            axes[n + j].plot(t, traj.commands[:, j], lw=1.0, label=kind, **style)
    any_t = next(iter(trajs.values())).times
    r_vals = np.array([np.atleast_1d(r_of_t(tk)) for tk in any_t])
    for i in range(n):
        lo, hi = bounds[i]
        if lo is not None:
            axes[i].axhline(lo, color="k", ls="--", lw=0.8)
            axes[i].axhline(hi, color="k", ls="--", lw=0.8)
        axes[i].set_ylabel(f"x{i + 1}")
    for j in range(n_v):
        axes[n + j].plot(any_t, r_vals[:, j], color="k", ls=":", lw=0.9)
        axes[n + j].set_ylabel(f"v{j + 1}")
    axes[0].legend(loc="best", fontsize=8)
    axes[-1].set_xlabel("t [s]")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
