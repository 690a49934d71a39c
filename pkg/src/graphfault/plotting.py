"""Report figures rendered straight to files (no pyplot global state)."""

from __future__ import annotations

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

RC = {"dpi": 120}


def _new(width=6.0, height=4.0):
    fig = Figure(figsize=(width, height), dpi=RC["dpi"])
    FigureCanvasAgg(fig)
    return fig, fig.add_subplot(111)


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="png")


def plot_confusion(confusion, class_names, path, title="Confusion matrix"):
    cm = np.asarray(confusion)
    fig, ax = _new(1.2 + 0.9 * len(class_names), 1.0 + 0.8 * len(class_names))
    im = ax.imshow(cm, cmap="Blues")
    ax.set_xticks(range(len(class_names)), class_names, rotation=45, ha="right")
    ax.set_yticks(range(len(class_names)), class_names)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    ax.set_title(title)
    thresh = cm.max() / 2 if cm.size else 0
    for i in range(cm.shape[0]):
        for j in range(cm.shape[1]):
            ax.text(j, i, str(int(cm[i, j])), ha="center", va="center",
                    color="white" if cm[i, j] > thresh else "black", fontsize=9)
    fig.colorbar(im, ax=ax, fraction=0.046, pad=0.04)
    _save(fig, path)


def plot_window_search(grid, best, path):
    """Objective against window size, one line per step/window ratio."""
    fig, ax = _new()
    by_ratio = {}
    for w, s, j in grid:
        by_ratio.setdefault(round(s / w, 3), []).append((w, j))
    for ratio, pts in sorted(by_ratio.items()):
        pts.sort()
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=f"step/window={ratio:g}")
    ax.plot([best[0]], [best[2]], marker="*", markersize=14, color="crimson", linestyle="none",
            label=f"best ({best[0]}, {best[1]})")
    ax.set_xscale("log", base=2)
    ax.set_xlabel("window (samples)")
    ax.set_ylabel("entropy objective J")
    ax.legend(fontsize=7)
    _save(fig, path)


def plot_noise_sweep(rows, path):
    sig = [r[0] for r in rows]
    mean = np.array([r[1] for r in rows])
    std = np.array([r[2] for r in rows])
    fig, ax = _new()
    ax.errorbar(sig, mean, yerr=std, marker="o", capsize=3)
    ax.set_xlabel("feature noise sigma (standardized units)")
    ax.set_ylabel("CV accuracy")
    ax.set_ylim(min(0.5, float(mean.min()) - 0.05), 1.01)
    ax.grid(alpha=0.3)
    _save(fig, path)


def plot_importance(importance, path, top=15):
    items = importance[:top][::-1]
    fig, ax = _new(6.0, 0.3 * len(items) + 1.2)
    ax.barh([n for n, _ in items], [v for _, v in items], color="steelblue")
    ax.set_xlabel("mean accuracy drop (permutation)")
    ax.tick_params(axis="y", labelsize=7)
    _save(fig, path)


def plot_transfer_matrix(rows, path, metric="accuracy"):
    domains = sorted({r["source"] for r in rows} | {r["target"] for r in rows})
    mat = np.full((len(domains), len(domains)), np.nan)
    for r in rows:
        mat[domains.index(r["source"]), domains.index(r["target"])] = r[metric]
    fig, ax = _new(1.5 + 0.9 * len(domains), 1.2 + 0.8 * len(domains))
    im = ax.imshow(mat, cmap="viridis", vmin=np.nanmin(mat) if np.isfinite(mat).any() else 0, vmax=1.0)
    ax.set_xticks(range(len(domains)), domains)
    ax.set_yticks(range(len(domains)), domains)
    ax.set_xlabel("target")
    ax.set_ylabel("source")
    for i in range(len(domains)):
        for j in range(len(domains)):
            if np.isfinite(mat[i, j]):
                ax.text(j, i, f"{mat[i, j]:.3f}", ha="center", va="center", color="white", fontsize=8)
    fig.colorbar(im, ax=ax, fraction=0.046, pad=0.04)
    _save(fig, path)
