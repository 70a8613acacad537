"""Figure construction from loaded run artifacts."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .artifacts import RunArtifacts
from .bodies import body_outline, transform_outline


def plot_snapshots(artifacts: RunArtifacts, times: list,
                   out_path) -> Path:
    """Panels of body outlines at the requested times.

    'o' marks each robot's initial position, '*' its goal.
    """
    times = list(times)
    if not times:
        raise ValueError("at least one snapshot time is required")
    n = len(times)
    ncols = min(n, 2)
    nrows = (n + ncols - 1) // ncols
    fig, axes = plt.subplots(nrows, ncols,
                             figsize=(6 * ncols, 4.5 * nrows),
                             squeeze=False)
    names = artifacts.robot_names
    colors = plt.cm.tab10(np.linspace(0, 1, 10))
    starts = {r["name"]: r["state0"] for r in artifacts.summary["robots"]}
    goals = {r["name"]: r["goal"] for r in artifacts.summary["robots"]}

    for pos, t in enumerate(times):
        ax = axes[pos // ncols][pos % ncols]
        poses = artifacts.poses_at(t)
        for k, name in enumerate(names):
            color = colors[k % len(colors)]
            spec = artifacts.robot_spec(name)
            outline = transform_outline(body_outline(spec["body"]),
                                        poses[name])
            ax.plot(outline[:, 0], outline[:, 1], color=color,
                    label=name)
            ax.plot(starts[name][0], starts[name][1], "o", color=color,
                    markersize=5, fillstyle="none")
            ax.plot(goals[name][0], goals[name][1], "*", color=color,
                    markersize=9)
            # path up to the snapshot time
            traj = artifacts.trajectory
            hist = traj[(traj["robot"] == name) & (traj["t"] <= t)]
            ax.plot(hist["x"], hist["y"], color=color, linewidth=0.6,
                    alpha=0.5)
        ax.set_title(f"t = {t:g} s")
        ax.set_aspect("equal")
        ax.grid(True, alpha=0.3)
        if pos == 0:
            ax.legend(loc="upper right", fontsize=8)
    for pos in range(n, nrows * ncols):
        axes[pos // ncols][pos % ncols].axis("off")
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def plot_ncbf(artifacts: RunArtifacts, out_path) -> Path:
    """Pairwise squared distances over time on a log axis.

    Left panel: one curve per pair; right panel: the minimum over all
    pairs.  Both panels show the safety margin as a horizontal line.
    """
    eps1_sq = artifacts.eps1_sq
    series = artifacts.pair_series()
    fig, (ax_all, ax_min) = plt.subplots(1, 2, figsize=(11, 4))

    if series:
        min_t = None
        stacked = []
        for (ri, rj), (t, h) in sorted(series.items()):
            ax_all.plot(t, h, linewidth=0.9, label=f"{ri}-{rj}")
            if min_t is None:
                min_t = t
            stacked.append(h)
        min_h = np.min(np.vstack(stacked), axis=0)
        ax_min.plot(min_t, min_h, color="k", linewidth=1.2,
                    label="min over pairs")
        ax_all.legend(fontsize=7, ncol=2)
        ax_min.legend(fontsize=8)
    for ax in (ax_all, ax_min):
        ax.axhline(eps1_sq, color="r", linestyle="--",
                   label="safety margin")
        ax.set_yscale("log")
        ax.set_xlabel("t [s]")
        ax.set_ylabel("squared distance [m$^2$]")
        ax.grid(True, which="both", alpha=0.3)
    ax_all.set_title("pairwise squared distances")
    ax_min.set_title("minimum over pairs")
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path
