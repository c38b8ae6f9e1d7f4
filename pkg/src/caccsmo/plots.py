"""Figure rendering for simulation reports.

Three panels per run, written as PNG files next to the CSV output:
attack signals against their estimates, the filtered injection against its
thresholds, and the vehicle response.  Kept out of the core modules so the
library has no plotting dependency at import time.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .sim import SimSystem, Trajectory

__all__ = ["render_run_figures"]

_CHANNEL_LABELS = ("spacing", "rel. velocity", "own velocity", "own accel.")


def _attack_labels(system: SimSystem):
    return ["$\\Delta u$"] + [
        f"$\\Delta$ {_CHANNEL_LABELS[ch - 1]}" for ch in system.part.filtered_channels]


def render_run_figures(traj: Trajectory, system: SimSystem, out_dir) -> list:
    """Write the three report figures; returns the file paths."""
    import os

    paths = []
    t = traj.t

    # attacks vs estimates
    fig, axes = plt.subplots(1 + system.h, 1, sharex=True, figsize=(7, 8))
    axes = np.atleast_1d(axes)
    true_delta = np.column_stack(
        [traj.du] + [traj.dy[:, ch - 1] for ch in system.part.filtered_channels])
    labels = _attack_labels(system)
    for i, ax in enumerate(axes):
        ax.plot(t, true_delta[:, i], "k-", lw=1.2, label="injected")
        if traj.estimates is not None:
            ax.plot(t, traj.estimates[:, i], "r--", lw=1.0, label="estimate")
            if system.estimator is not None:
                d = system.estimator.delta[i]
                ax.fill_between(t, traj.estimates[:, i] - d, traj.estimates[:, i] + d,
                                color="r", alpha=0.15, lw=0)
        ax.set_ylabel(labels[i])
        ax.grid(alpha=0.3)
    axes[0].legend(loc="upper right", fontsize=8)
    axes[-1].set_xlabel("t [s]")
    fig.suptitle("Injected attacks and their reconstruction")
    fig.tight_layout()
    p = os.path.join(out_dir, "fig_attack_estimates.png")
    fig.savefig(p, dpi=130)
    plt.close(fig)
    paths.append(p)

    # EOI vs thresholds
    fig, axes = plt.subplots(4, 1, sharex=True, figsize=(7, 8))
    for ch, ax in enumerate(axes):
        ax.plot(t, traj.nu_fil[:, ch], "b-", lw=0.9, label="filtered injection")
        ax.plot(t, traj.threshold[:, ch], "k--", lw=1.0, label="threshold")
        ax.plot(t, -traj.threshold[:, ch], "k--", lw=1.0)
        for ev in traj.detections:
            if ev.channel == ch:
                ax.axvline(ev.time, color="r", alpha=0.6, lw=1.0)
        ax.set_ylabel(f"ch {ch + 1}")
        ax.grid(alpha=0.3)
    axes[0].legend(loc="upper right", fontsize=8)
    axes[-1].set_xlabel("t [s]")
    fig.suptitle("Filtered switching injection and detection thresholds")
    fig.tight_layout()
    p = os.path.join(out_dir, "fig_eoi_thresholds.png")
    fig.savefig(p, dpi=130)
    plt.close(fig)
    paths.append(p)

    # vehicle response
    fig, axes = plt.subplots(3, 1, sharex=True, figsize=(7, 7))
    axes[0].plot(t, traj.gap, "b-", lw=1.2)
    axes[0].axhline(0.0, color="r", lw=0.8, alpha=0.7)
    axes[0].set_ylabel("gap [m]")
    axes[1].plot(t, traj.x_true[:, 1], "k-", lw=1.0, label="leader")
    axes[1].plot(t, traj.x_true[:, 4], "b-", lw=1.0, label="follower")
    axes[1].set_ylabel("v [m/s]")
    axes[1].legend(loc="best", fontsize=8)
    axes[2].plot(t, traj.x_true[:, 2], "k-", lw=1.0)
    axes[2].plot(t, traj.x_true[:, 5], "b-", lw=1.0)
    axes[2].set_ylabel("a [m/s$^2$]")
    axes[2].set_xlabel("t [s]")
    for ax in axes:
        ax.grid(alpha=0.3)
    fig.suptitle("Vehicle response")
    fig.tight_layout()
    p = os.path.join(out_dir, "fig_vehicle_response.png")
    fig.savefig(p, dpi=130)
    plt.close(fig)
    paths.append(p)
    return paths
