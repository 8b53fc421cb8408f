"""Figure rendering for grid results and filter runs.

Renders the standard comparison scatter (one point per experiment,
baseline filter on x, bridge filter on y, point area growing with the
particle count) for each time-adjusted metric, and a particle-path fan
for single filter runs. Figures are written next to the delimited
output; nothing here is needed for the numerics.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_METRICS = ("mse_metric", "ess_metric", "car_metric")
_TITLES = {
    "mse_metric": "time-adjusted 1/MSE",
    "ess_metric": "time-adjusted ESS",
    "car_metric": "time-adjusted CAR",
}


def render_metric_scatters(metrics_rows, out_dir, x_filter="bootstrap",
                           y_filter="bridge"):
    """One log-log scatter per metric; returns the written paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for metric in _METRICS:
        xs, ys, sizes = [], [], []
        for row in metrics_rows:
            x = row.get(f"{x_filter}_{metric}")
            y = row.get(f"{y_filter}_{metric}")
            if x is None or y is None or not (np.isfinite(x) and np.isfinite(y)):
                continue
            xs.append(x)
            ys.append(y)
            sizes.append(10 + 3 * np.log2(row["particles"]) ** 2)
        if not xs:
            continue
        fig, ax = plt.subplots(figsize=(5, 5))
        lo = 0.5 * min(min(xs), min(ys))
        hi = 2.0 * max(max(xs), max(ys))
        ax.plot([lo, hi], [lo, hi], color="0.6", lw=0.8, zorder=1)
        ratio = np.asarray(ys) / np.asarray(xs)
        colors = np.where(ratio >= 2.0, "tab:red",
                          np.where(ratio <= 0.5, "tab:blue", "0.4"))
        ax.scatter(xs, ys, s=sizes, c=colors, alpha=0.7, zorder=2)
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlim(lo, hi)
        ax.set_ylim(lo, hi)
        ax.set_xlabel(f"{x_filter} {_TITLES[metric]}")
        ax.set_ylabel(f"{y_filter} {_TITLES[metric]}")
        ax.set_title(f"{_TITLES[metric]}: points above the line favour {y_filter}")
        fig.tight_layout()
        path = os.path.join(out_dir, f"{metric}.png")
        fig.savefig(path, dpi=150)
        plt.close(fig)
        paths.append(path)
    return paths


def render_path_fan(output, schedule, obs, out_path, component=0, max_paths=64):
    """Particle trajectories with resampling times and observations marked.

    output must come from a filter run with store_history=True.
    """
    from .smc import extract_trajectories

    paths, weights = extract_trajectories(output.ancestry, output.final)
    event_times = schedule.times[output.ancestry.event_indices]
    n_show = min(max_paths, paths.shape[0])
    order = np.argsort(weights)[::-1][:n_show]

    fig, ax = plt.subplots(figsize=(7, 4))
    for idx in order:
        ax.plot(event_times, paths[idx, :, component], lw=0.5, alpha=0.4,
                color="tab:blue")
    for k in output.resample_events:
        ax.axvline(schedule.times[k], color="0.3", lw=0.8)
    obs_values = np.atleast_2d(np.asarray(obs.values, dtype=float))
    if obs_values.shape[0] != len(obs.times):
        obs_values = obs_values.T
    ax.plot(np.asarray(obs.times), obs_values[:, 0] if obs_values.ndim == 2
            else obs_values, "o", color="tab:red", ms=4, zorder=3)
    ax.set_xlabel("time")
    ax.set_ylabel("state")
    ax.set_title("particle paths (vertical lines mark resampling)")
    fig.tight_layout()
    os.makedirs(os.path.dirname(out_path) or ".", exist_ok=True)
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path
