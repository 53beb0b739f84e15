"""Figures rendered next to the CSV outputs.

matplotlib is imported lazily with the Agg backend so the numerical core
does not depend on it.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np


def _pyplot():
    try:
        import matplotlib
    except ImportError as exc:  # pragma: no cover - exercised only without the extra
        raise RuntimeError("plotting requires matplotlib (pip install misisun[plot])") from exc
    matplotlib.use("Agg", force=True)
    import matplotlib.pyplot as plt

    plt.rcParams.update({
        "font.size": 9,
        "axes.labelsize": 9,
        "legend.fontsize": 8,
        "xtick.labelsize": 8,
        "ytick.labelsize": 8,
        "axes.spines.top": False,
        "axes.spines.right": False,
    })
    return plt


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    import matplotlib.pyplot as plt

    plt.close(fig)
    return path


def plot_sre_bars(summary: list[dict], path, condition_label: str = "condition") -> Path:
    """Grouped bars of mean SRE per (condition, algorithm) with one-std error bars."""
    plt = _pyplot()
    conditions = list(dict.fromkeys(row["condition"] for row in summary))
    algos = list(dict.fromkeys(row["algo"] for row in summary))
    lookup = {(row["condition"], row["algo"]): row for row in summary}
    width = 0.8 / max(len(algos), 1)
    x = np.arange(len(conditions))
    fig, ax = plt.subplots(figsize=(1.2 + 1.1 * len(conditions) * max(len(algos), 2) / 2, 3.0))
    for k, algo in enumerate(algos):
        means = [float(lookup[(c, algo)]["sre_db_mean"]) if (c, algo) in lookup else np.nan for c in conditions]
        stds = [float(lookup[(c, algo)]["sre_db_std"]) if (c, algo) in lookup else 0.0 for c in conditions]
        ax.bar(x + (k - (len(algos) - 1) / 2) * width, means, width, yerr=stds, capsize=2, label=algo)
    ax.set_xticks(x)
    ax.set_xticklabels([str(c) for c in conditions])
    ax.set_xlabel(condition_label)
    ax.set_ylabel("SRE (dB)")
    ax.legend(frameon=False, ncol=min(len(algos), 4))
    return _save(fig, path)


def plot_abundance_maps(a, spatial_shape, path, titles=None) -> Path:
    plt = _pyplot()
    a = np.asarray(a)
    r = a.shape[0]
    h, w = spatial_shape
    ncols = min(r, 6)
    nrows = int(np.ceil(r / ncols))
    fig, axes = plt.subplots(nrows, ncols, figsize=(1.6 * ncols, 1.7 * nrows), squeeze=False)
    for k, ax in enumerate(axes.flat):
        ax.axis("off")
        if k >= r:
            continue
        im = ax.imshow(a[k].reshape(h, w), vmin=0.0, vmax=1.0, cmap="viridis")
        ax.set_title(titles[k] if titles else f"endmember {k + 1}")
    fig.colorbar(im, ax=axes.ravel().tolist(), shrink=0.8)
    return _save(fig, path)


def plot_endmembers(e_est, path, e_ref=None) -> Path:
    """Estimated endmembers in black, references (when given) in red."""
    plt = _pyplot()
    e_est = np.asarray(e_est)
    r = e_est.shape[1]
    ncols = min(r, 3)
    nrows = int(np.ceil(r / ncols))
    fig, axes = plt.subplots(nrows, ncols, figsize=(2.4 * ncols, 1.8 * nrows), squeeze=False, sharex=True)
    bands = np.arange(e_est.shape[0])
    for k, ax in enumerate(axes.flat):
        if k >= r:
            ax.axis("off")
            continue
        if e_ref is not None:
            ax.plot(bands, np.asarray(e_ref)[:, k], color="tab:red", lw=1.0)
        ax.plot(bands, e_est[:, k], color="black", lw=1.0)
        ax.set_title(f"endmember {k + 1}")
    for ax in axes[-1]:
        ax.set_xlabel("band")
    return _save(fig, path)


def plot_objective_trace(trace, path) -> Path:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(3.4, 2.4))
    ax.semilogy(np.arange(1, len(trace) + 1), trace, lw=1.0)
    ax.set_xlabel("outer iteration")
    ax.set_ylabel("objective")
    return _save(fig, path)
