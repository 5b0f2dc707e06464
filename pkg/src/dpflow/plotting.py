"""Static SVG figures for the experiment tasks.

Presentation only: these read finished row dicts and never feed anything
back into the computation. All figures are self-contained SVG files.
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

__all__ = ["plot_collapse", "plot_grid_clip_T", "plot_sweep_T", "plot_sweep_p"]


def _aggregate(rows, x_key, y_key="risk_private"):
    """Mean and standard error of y over seeds at each x (NaNs dropped)."""
    groups: dict[float, list[float]] = {}
    for r in rows:
        y = r[y_key]
        if not (isinstance(y, float) and math.isnan(y)):
            groups.setdefault(r[x_key], []).append(y)
    xs = np.asarray(sorted(groups))
    means = np.asarray([np.mean(groups[x]) for x in xs])
    errs = np.asarray([np.std(groups[x]) / math.sqrt(len(groups[x])) for x in xs])
    return xs, means, errs


def plot_sweep_p(rows, path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    for y_key, label in (("risk_private", "private descent"),
                         ("risk_baseline", "min-norm baseline")):
        xs, means, errs = _aggregate(rows, "p", y_key)
        ax.errorbar(xs, means, yerr=errs, marker="o", capsize=3, label=label)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("number of features p")
    ax.set_ylabel("test loss")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def plot_sweep_T(rows, path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    for p in sorted({r["p"] for r in rows}):
        sub = [r for r in rows if r["p"] == p]
        xs, means, errs = _aggregate(sub, "T")
        ax.errorbar(xs, means, yerr=errs, marker="o", capsize=3, label=f"p = {p}")
    ax.set_xscale("log")
    ax.set_xlabel("number of steps T")
    ax.set_ylabel("test loss")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def plot_collapse(rows, path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    for p in sorted({r["p"] for r in rows}):
        sub = [r for r in rows if r["p"] == p]
        xs, means, errs = _aggregate(sub, "abscissa")
        ax.errorbar(xs, means, yerr=errs, marker="o", capsize=3, label=f"p = {p}")
    ax.set_xscale("log")
    ax.set_xlabel("rescaled time  eta T p / d")
    ax.set_ylabel("test loss")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def plot_grid_clip_T(rows, path) -> None:
    radii = sorted({r["c_clip"] for r in rows})
    steps = sorted({r["T"] for r in rows})
    grid = np.full((len(steps), len(radii)), np.nan)
    for i, t in enumerate(steps):
        for j, c in enumerate(radii):
            _, means, _ = _aggregate(
                [r for r in rows if r["T"] == t and r["c_clip"] == c], "T")
            if means.size:
                grid[i, j] = means[0]
    fig, ax = plt.subplots(figsize=(6, 4.5))
    im = ax.imshow(np.log10(grid), origin="lower", aspect="auto", cmap="viridis")
    ax.set_xticks(range(len(radii)), [f"{c:.3g}" for c in radii])
    ax.set_yticks(range(len(steps)), [str(t) for t in steps])
    ax.set_xlabel("clipping radius")
    ax.set_ylabel("number of steps T")
    fig.colorbar(im, ax=ax, label="log10 test loss")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
