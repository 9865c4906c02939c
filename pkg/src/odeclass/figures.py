"""Matplotlib rendering for the demo report.

Kept separate from the CLI so the heavy import only happens when figures are
actually requested. Uses the Agg backend: this always renders to files.
"""

from __future__ import annotations

__all__ = ["render_chirp_figures"]


def render_chirp_figures(traj, forcing_values, stem):
    """Write the channel panel and the forcing-vs-gap panel as PNGs.

    Returns the list of paths written. `forcing_values` is f sampled on the
    trajectory grid.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    t = traj.grid
    channels_path = stem + "_channels.png"
    fig, axes = plt.subplots(2, 2, figsize=(11, 7), sharex=True)
    for ax, (label, values) in zip(
        axes.flat,
        (("x", traj.x), ("x'", traj.xprime), ("y1", traj.y1), ("y2", traj.y2)),
    ):
        ax.plot(t, values, linewidth=1.0)
        ax.set_title(label)
        ax.grid(True, alpha=0.3)
    for ax in axes[-1]:
        ax.set_xlabel("t")
    fig.suptitle("chirp response channels")
    fig.tight_layout()
    fig.savefig(channels_path, dpi=120)
    plt.close(fig)

    gap_path = stem + "_gap.png"
    gap = -(traj.params.a * traj.xprime + traj.params.b * traj.x)
    fig, (top, bottom) = plt.subplots(2, 1, figsize=(11, 7), sharex=True)
    top.plot(t, forcing_values, linewidth=0.8)
    top.set_title("forcing f")
    top.grid(True, alpha=0.3)
    bottom.plot(t, gap, linewidth=1.0)
    bottom.set_title("x'' - f")
    bottom.set_xlabel("t")
    bottom.grid(True, alpha=0.3)
    fig.suptitle("the second derivative tracks the forcing")
    fig.tight_layout()
    fig.savefig(gap_path, dpi=120)
    plt.close(fig)
    return [channels_path, gap_path]
