"""Static figures written next to the CSV reports."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

FIGSIZE = (6.4, 4.0)


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def winprob_surface(grid, path, lead_window=30):
    """Heat map of the smoothed home win probability (regulation only)."""
    ax_ = grid.axes
    lo, hi = ax_.max_lead - lead_window, ax_.max_lead + lead_window + 1
    data = grid.phat[: 2881, lo:hi].T
    fig, ax = plt.subplots(figsize=FIGSIZE)
    im = ax.imshow(data, origin="lower", aspect="auto", cmap="RdBu_r", vmin=0, vmax=1,
                   extent=(0, 2880, -lead_window - 0.5, lead_window + 0.5))
    ax.set_xlabel("seconds elapsed")
    ax.set_ylabel("home lead")
    fig.colorbar(im, ax=ax, label="home win probability")
    return _save(fig, path)


def densities(curves, path, xlabel="partial effect"):
    """Overlay of density curves; ``curves`` maps label -> (x, density)."""
    fig, ax = plt.subplots(figsize=FIGSIZE)
    for label, (x, d) in curves.items():
        ax.plot(x, d, label=label)
    ax.axvline(0, color="0.6", lw=0.8, ls="--")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("density")
    if len(curves) <= 12:
        ax.legend(fontsize=8)
    return _save(fig, path)


def boxplots(samples, path, ylabel="partial effect"):
    """Box plots of posterior samples; ``samples`` maps label -> array."""
    labels = list(samples)
    fig, ax = plt.subplots(figsize=(max(FIGSIZE[0], 0.35 * len(labels)), FIGSIZE[1]))
    ax.boxplot([samples[k] for k in labels], showfliers=False)
    ax.set_xticks(range(1, len(labels) + 1), labels, rotation=90, fontsize=7)
    ax.axhline(0, color="0.6", lw=0.8, ls="--")
    ax.set_ylabel(ylabel)
    return _save(fig, path)


def acf_plot(values, path, n=None):
    lags = np.arange(1, len(values) + 1)
    fig, ax = plt.subplots(figsize=FIGSIZE)
    ax.vlines(lags, 0, values)
    ax.axhline(0, color="k", lw=0.8)
    if n:
        band = 1.96 / np.sqrt(n)
        ax.axhline(band, color="b", ls="--", lw=0.8)
        ax.axhline(-band, color="b", ls="--", lw=0.8)
    ax.set_xlabel("lag")
    ax.set_ylabel("autocorrelation")
    return _save(fig, path)


def scatter(x, y, path, xlabel, ylabel, diagonal=False):
    fig, ax = plt.subplots(figsize=FIGSIZE)
    ax.scatter(x, y, s=4, alpha=0.5)
    if diagonal:
        lim = [min(np.min(x), np.min(y)), max(np.max(x), np.max(y))]
        ax.plot(lim, lim, color="0.5", lw=0.8)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    return _save(fig, path)


def histogram(values, path, xlabel, bins=50, mark=None):
    fig, ax = plt.subplots(figsize=FIGSIZE)
    ax.hist(values, bins=bins, color="0.5")
    if mark is not None:
        ax.axvline(mark, color="r")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("count")
    return _save(fig, path)


def binned_sd_plot(binned, path):
    centers = 0.5 * (binned.edges[:-1] + binned.edges[1:])
    fig, ax = plt.subplots(figsize=FIGSIZE)
    ax.plot(centers, binned.sd, "o-")
    ax.set_xlabel("starting win probability")
    ax.set_ylabel("SD of change in win probability")
    return _save(fig, path)
