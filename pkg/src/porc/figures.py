"""Figure rendering for suite runs, reports, and training logs.

Everything draws through the Agg backend straight to files, so the
plots work headless and sit next to the CSV/JSON outputs they
visualize.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .errors import ConfigError

_CATEGORY_COLORS = {
    "quality-control": "#4c72b0",
    "pan-cancer": "#dd8452",
    "reference-benchmarks": "#55a868",
    "cancer-subtyping": "#c44e52",
    "grading-staging": "#8172b3",
    "molecular": "#937860",
}


def plot_category_means(agg, path) -> Path:
    """Bar chart of per-category primary-metric means."""
    if not agg.category_means:
        raise ConfigError("plot_category_means: nothing to plot")
    names = list(agg.category_means)
    values = [agg.category_means[n] for n in names]
    fig, ax = plt.subplots(figsize=(8, 4.5))
    bars = ax.bar(range(len(names)), values,
                  color=[_CATEGORY_COLORS.get(n, "#777777") for n in names])
    for bar, value in zip(bars, values):
        ax.text(bar.get_x() + bar.get_width() / 2, value + 0.01, f"{value:.3f}",
                ha="center", va="bottom", fontsize=8)
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=20, ha="right", fontsize=8)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("mean of first task metric")
    ax.set_title("benchmark category means")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def plot_task_overview(results, path) -> Path:
    """One bar per task, colored by category."""
    if not results:
        raise ConfigError("plot_task_overview: nothing to plot")
    results = sorted(results, key=lambda r: r.task_id)
    ids = [r.task_id for r in results]
    values = [r.metrics[next(iter(r.metrics))] for r in results]
    colors = [_CATEGORY_COLORS.get(r.category, "#777777") for r in results]
    fig, ax = plt.subplots(figsize=(max(6.0, 0.11 * len(ids) + 2.0), 4.0))
    ax.bar(range(len(ids)), values, color=colors, width=0.85)
    ax.set_xticks(range(0, len(ids), max(1, len(ids) // 16)))
    ax.set_xticklabels([ids[i] for i in range(0, len(ids), max(1, len(ids) // 16))], fontsize=7)
    ax.set_xlabel("task id")
    ax.set_ylabel("first task metric")
    ax.set_ylim(0, 1.05)
    ax.set_title(f"per-task results ({len(ids)} tasks)")
    seen = []
    for r in results:
        if r.category not in seen:
            seen.append(r.category)
    handles = [plt.Rectangle((0, 0), 1, 1, color=_CATEGORY_COLORS.get(c, "#777777")) for c in seen]
    ax.legend(handles, seen, fontsize=7, ncol=2)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def plot_agreement_heatmap(counts: np.ndarray, labels, path) -> Path:
    """Reference-vs-candidate verdict matrix with cell annotations."""
    counts = np.asarray(counts)
    if counts.ndim != 2 or counts.shape[0] != counts.shape[1] or counts.shape[0] != len(labels):
        raise ConfigError("plot_agreement_heatmap: counts must be square and match labels")
    if counts.size == 0:
        raise ConfigError("plot_agreement_heatmap: nothing to plot")
    side = max(3.0, 0.6 * len(labels) + 1.5)
    fig, ax = plt.subplots(figsize=(side + 1.0, side))
    image = ax.imshow(counts, cmap="Blues")
    ax.set_xticks(range(len(labels)))
    ax.set_yticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=45, ha="right", fontsize=8)
    ax.set_yticklabels(labels, fontsize=8)
    ax.set_xlabel("candidate verdict")
    ax.set_ylabel("reference verdict")
    threshold = counts.max() / 2 if counts.max() else 0.5
    for i in range(len(labels)):
        for j in range(len(labels)):
            ax.text(j, i, str(counts[i, j]), ha="center", va="center", fontsize=8,
                    color="white" if counts[i, j] > threshold else "black")
    fig.colorbar(image, ax=ax, shrink=0.8)
    ax.set_title("verdict agreement")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def plot_loss_curves(step_metrics, path) -> Path:
    """Per-term loss trajectories from a pretraining run."""
    if not step_metrics:
        raise ConfigError("plot_loss_curves: nothing to plot")
    steps = [m.step for m in step_metrics]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    for attr in ("total", "dino", "ibot", "koleo"):
        ax1.plot(steps, [getattr(m, attr) for m in step_metrics], label=attr, linewidth=1)
    ax1.set_xlabel("step")
    ax1.set_ylabel("loss")
    ax1.legend(fontsize=8)
    ax1.set_title("loss terms")
    ax2.plot(steps, [m.teacher_entropy for m in step_metrics], color="#444444", linewidth=1)
    ax2.set_xlabel("step")
    ax2.set_ylabel("teacher target entropy")
    ax2.set_title("target spread")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)
