"""Batch matplotlib figures for simulation reports.

Everything renders to files through the Agg backend; nothing is interactive.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

plt.rcParams["figure.figsize"] = (6.0, 4.5)
plt.rcParams["savefig.dpi"] = 120
plt.rcParams["savefig.bbox"] = "tight"


def save_field_figure(mesh, values, path, title=""):
    """Heat map of a primal 0-form over the triangulation."""
    fig, ax = plt.subplots()
    xy = mesh.vertices[:, :2]
    tpc = ax.tripcolor(xy[:, 0], xy[:, 1], mesh.triangles, values,
                       shading="gouraud", cmap="viridis")
    fig.colorbar(tpc, ax=ax)
    ax.set_aspect("equal")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    if title:
        ax.set_title(title)
    fig.savefig(path)
    plt.close(fig)
    return path


def save_series_figure(times, series, path, ylabel="value"):
    """Line plot of named scalar series over time."""
    fig, ax = plt.subplots()
    for name, ys in series.items():
        ax.plot(times, ys, label=name)
    ax.set_xlabel("t")
    ax.set_ylabel(ylabel)
    if series:
        ax.legend(loc="best", frameon=False)
    ax.spines["right"].set_visible(False)
    ax.spines["top"].set_visible(False)
    fig.savefig(path)
    plt.close(fig)
    return path


def trajectory_series(trajectory, var):
    """min / max / mean of one variable across the recorded snapshots."""
    mins, maxs, means = [], [], []
    for snap in trajectory.snapshots:
        v = snap.cochains[var].values
        mins.append(float(np.min(v)))
        maxs.append(float(np.max(v)))
        means.append(float(np.mean(v)))
    return {f"min {var}": mins, f"max {var}": maxs, f"mean {var}": means}
