"""SVG figures for the command-line reports (matplotlib, Agg backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed ids and no date stamp so reruns write identical files
matplotlib.rcParams["svg.hashsalt"] = "neelwall"
matplotlib.rcParams["svg.fonttype"] = "none"
_META = {"Date": None, "Creator": "neelwall"}


def _save(fig, path, description=""):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = dict(_META)
    if description:
        meta["Description"] = description
    fig.savefig(path, format="svg", metadata=meta, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_wall(wall, path, description="", window: float = 10.0):
    """Phase and its derivative near the wall center."""
    x = wall.grid.nodes
    sel = np.abs(x) <= window
    fig, (ax1, ax2) = plt.subplots(2, 1, sharex=True, figsize=(6, 5))
    ax1.plot(x[sel], wall.theta[sel], color="C0")
    ax1.axhline(np.pi / 2, color="0.7", lw=0.8, ls="--")
    ax1.axhline(-np.pi / 2, color="0.7", lw=0.8, ls="--")
    ax1.set_ylabel(r"$\theta_\varepsilon$")
    ax2.plot(x[sel], wall.derivative[sel], color="C1")
    ax2.set_ylabel(r"$\theta_\varepsilon'$")
    ax2.set_xlabel("x")
    p = wall.params
    ax1.set_title(f"kappa={p.kappa:g}, epsilon={p.epsilon:g}, L={wall.grid.half_length:g}, "
                  f"N={wall.grid.n_points}")
    return _save(fig, path, description)


def plot_spectra(reports, path, description=""):
    """Eigenvalue scatter, one panel per report."""
    fig, axes = plt.subplots(1, len(reports), figsize=(4 * len(reports), 3.6), squeeze=False)
    for ax, rep in zip(axes[0], reports):
        ev = np.asarray(rep.eigenvalues)
        ax.scatter(ev.real, ev.imag, s=4, color="C0")
        ax.axvline(0.0, color="0.6", lw=0.8)
        ax.set_xscale("symlog", linthresh=1.0)
        ax.set_title(rep.label)
        ax.set_xlabel("Re")
        ax.set_ylabel("Im")
    fig.tight_layout()
    return _save(fig, path, description)


def plot_heatmap(times, x, field, path, label=r"$\vartheta$", description=""):
    fig, ax = plt.subplots(figsize=(6, 4))
    lim = float(np.max(np.abs(field))) or 1.0
    mesh = ax.pcolormesh(x, times, field, shading="nearest", cmap="RdBu_r", vmin=-lim, vmax=lim)
    fig.colorbar(mesh, ax=ax, label=label)
    ax.set_xlabel("x")
    ax.set_ylabel("t")
    return _save(fig, path, description)


def plot_gamma_curve(lams, gammas, path, description=""):
    fig, ax = plt.subplots(figsize=(5, 3.6))
    ax.plot(lams, gammas, "o-", ms=3)
    ax.set_xlabel(r"$\lambda$")
    ax.set_ylabel(r"$\gamma(\lambda)$")
    ax.ticklabel_format(axis="y", style="sci", scilimits=(-3, 3))
    return _save(fig, path, description)
