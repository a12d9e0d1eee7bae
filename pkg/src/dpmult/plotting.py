"""Static figures written next to the CSV/JSON outputs."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed metadata keeps reruns byte-stable
_PNG_META = {"Software": None}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_PNG_META)
    plt.close(fig)
    return Path(path)


def plot_privacy_sweep(report, path):
    """Two panels against epsilon: mean AUC and mean disagreement, with 95% CIs."""
    cells = [c for c in report.cells if c.ok]
    eps = [c.epsilon for c in cells]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    auc = [c.performance["auc"] for c in cells]
    ax1.errorbar(eps, [a.mean for a in auc], yerr=[a.ci95_half_width for a in auc], marker="o", capsize=3)
    ax1.set_xlabel(r"$\varepsilon$")
    ax1.set_ylabel("AUC")
    dis = [c.disagreement for c in cells]
    ax2.errorbar(
        eps,
        [d.mean() for d in dis],
        yerr=[1.96 * d.std() / np.sqrt(d.size) for d in dis],
        marker="o",
        capsize=3,
        color="C3",
    )
    ax2.set_xlabel(r"$\varepsilon$")
    ax2.set_ylabel("mean disagreement")
    return _save(fig, path)


def plot_disagreement_distribution(report, path):
    """Sorted per-example disagreement, one curve per epsilon."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for c in report.cells:
        if not c.ok:
            continue
        v = np.sort(c.disagreement)[::-1]
        ax.plot(np.arange(v.size) / v.size, v, label=rf"$\varepsilon$={c.epsilon:g}")
    ax.set_xlabel("fraction of test examples")
    ax.set_ylabel("disagreement")
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_group_disparities(report, path):
    cells = [c for c in report.cells if c.ok and c.groups]
    if not cells:
        return None
    labels = [g.group_label for g in cells[0].groups]
    width = 0.8 / len(cells)
    fig, ax = plt.subplots(figsize=(6, 3.5))
    x = np.arange(len(labels))
    for i, c in enumerate(cells):
        ax.bar(
            x + i * width,
            [g.mean_disagreement for g in c.groups],
            width,
            yerr=[g.ci95_half_width for g in c.groups],
            label=rf"$\varepsilon$={c.epsilon:g}",
        )
    ax.set_xticks(x + 0.4 - width / 2, labels)
    ax.set_ylabel("mean disagreement")
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_closed_form(rows, axis: str, path):
    """Heatmap of disagreement over (noise axis, confidence)."""
    xs = sorted({r[axis] for r in rows})
    cs = sorted({r["confidence"] for r in rows})
    grid = np.full((len(cs), len(xs)), np.nan)
    xi = {v: i for i, v in enumerate(xs)}
    ci = {v: i for i, v in enumerate(cs)}
    for r in rows:
        grid[ci[r["confidence"]], xi[r[axis]]] = r["disagreement"]
    fig, ax = plt.subplots(figsize=(5, 4))
    mesh = ax.pcolormesh(xs, cs, grid, cmap="Greys", vmin=0.0, vmax=1.0, shading="nearest")
    if axis == "epsilon":
        ax.set_xscale("log")
        ax.set_xlabel(r"$\varepsilon$")
    else:
        ax.set_xlabel(r"noise scale $\sigma$")
    ax.set_ylabel("non-private confidence")
    fig.colorbar(mesh, ax=ax, label="disagreement")
    return _save(fig, path)
