"""Figure rendering for run reports.

Every CLI report path drops PNG figures next to its CSV tables: field heatmaps
or line profiles for simulation runs, fit overlays for the estimator
experiments, the error ladder, and the front-metric time series.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _save(fig, path: Path) -> Path:
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_field(field: np.ndarray, grid, title: str, path: Path,
               time_value: float | None = None) -> Path:
    label = title if time_value is None else f"{title} at t={time_value:g}"
    fig, ax = plt.subplots(figsize=(5.2, 4.4))
    if field.ndim == 2:
        im = ax.imshow(field.T, origin="lower", cmap="viridis",
                       extent=(grid.lo, grid.hi, grid.lo, grid.hi))
        fig.colorbar(im, ax=ax, shrink=0.85)
        ax.set_xlabel("x")
        ax.set_ylabel("y")
    else:
        ax.plot(grid.centers(), field, lw=1.5)
        ax.set_xlabel("x")
        ax.set_ylabel("value")
    ax.set_title(label)
    return _save(fig, path)


def plot_msd(result, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(5.2, 4.0))
    ax.plot(result.times, result.msd, ".", ms=3, label="measured MSD")
    t = np.linspace(0, result.times.max(), 100)
    ax.plot(t, 2 * result.n * result.d_target * t, "k--", lw=1,
            label=f"2nDt with D={result.d_target:g}")
    ax.axvspan(*result.window, alpha=0.12, color="green", label="fit window")
    ax.set_xlabel("t")
    ax.set_ylabel("MSD")
    ax.legend(fontsize=8)
    ax.set_title(f"D_eff = {result.d_eff:.4f} +- {result.band:.4f}")
    return _save(fig, path)


def plot_drift(result, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(5.2, 4.0))
    for j in range(result.mean_positions.shape[1]):
        ax.plot(result.times, result.mean_positions[:, j], label=f"mean x[{j}]")
        ax.plot(result.times, result.target[j] * result.times, "--", lw=1,
                label=f"target slope {result.target[j]:.4g}")
    ax.set_xlabel("t")
    ax.set_ylabel("ensemble mean position")
    ax.legend(fontsize=8)
    ax.set_title("chemotactic drift vs closed form")
    return _save(fig, path)


def plot_ladder(report, path: Path) -> Path:
    eps = [r.epsilon for r in report.rows]
    err = [r.error_l1 for r in report.rows]
    noise = [r.noise_l1 for r in report.rows]
    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    ax.loglog(eps, err, "o-", label="relative L1 error")
    ax.loglog(eps, noise, "s--", label="Monte Carlo noise floor")
    ax.set_xlabel("epsilon")
    ax.set_ylabel("error")
    ax.invert_xaxis()
    ax.legend(fontsize=8)
    ax.set_title(f"kinetic vs PDE (rate fit {report.rate_estimate:.2f})")
    return _save(fig, path)


def plot_front_metrics(metrics, path: Path) -> Path:
    t = [m.time for m in metrics]
    fig, axes = plt.subplots(1, 3, figsize=(11, 3.4))
    axes[0].plot(t, [m.radius for m in metrics], "o-")
    axes[0].set_title("front radius")
    axes[1].plot(t, [m.width for m in metrics], "o-")
    axes[1].set_title("interface width")
    axes[2].plot(t, [m.angular_cv for m in metrics], "o-")
    axes[2].set_title("angular CV on the front")
    for ax in axes:
        ax.set_xlabel("t")
    return _save(fig, path)


def plot_spectrum(eigenvalues: np.ndarray, lam0: float, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(4.6, 4.0))
    ax.plot(eigenvalues.real, eigenvalues.imag, "x")
    ax.axvline(0.0, color="k", lw=0.6)
    ax.axvline(-lam0, color="r", lw=0.6, ls="--", label="-lambda0")
    ax.set_xlabel("Re")
    ax.set_ylabel("Im")
    ax.legend(fontsize=8)
    ax.set_title("turning operator spectrum")
    return _save(fig, path)
