"""Matplotlib figure rendering for the CLI report paths.

Figures are written next to the delimited outputs. PNG metadata is stripped
so reruns produce byte-identical files.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_SAVE_KW = {"dpi": 120, "metadata": {"Software": None}}


def render_sweep_figure(thresholds, accuracies, best_t, path) -> None:
    """Rank-1 accuracy as a function of the rejection threshold t."""
    fig, ax = plt.subplots(figsize=(5.0, 3.2))
    ax.plot(thresholds, accuracies, marker="o", color="tab:blue")
    ax.axvline(best_t, color="tab:red", linestyle="--", linewidth=1,
               label=f"selected t = {best_t:g}")
    ax.set_xlabel("threshold t")
    ax.set_ylabel("rank-1 accuracy")
    ax.set_title("Threshold sensitivity")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def render_stats_figure(report, path) -> None:
    """Average ranks per method with the Bonferroni-Dunn critical difference."""
    names = list(report.method_names)
    ranks = np.asarray(report.avg_ranks)
    fig, ax = plt.subplots(figsize=(5.0, 0.8 + 0.5 * len(names)))
    y = np.arange(len(names))
    ax.barh(y, ranks, color="tab:blue", height=0.5)
    best = float(ranks.min())
    ax.axvline(best + report.critical_difference, color="tab:red", linestyle="--",
               linewidth=1, label=f"best rank + CD ({report.critical_difference:.3f})")
    ax.set_yticks(y, names)
    ax.invert_yaxis()
    ax.set_xlabel("average rank (lower is better)")
    ax.set_title(f"Bonferroni-Dunn comparison, alpha = {report.alpha:g}")
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def render_evaluate_figure(local_acc, global_acc, path) -> None:
    """Per-patch local vs. post-threshold global identification accuracy."""
    local_acc = np.asarray(local_acc)
    global_acc = np.asarray(global_acc)
    m = local_acc.shape[0]
    x = np.arange(1, m + 1)
    fig, ax = plt.subplots(figsize=(5.5, 3.2))
    w = 0.38
    ax.bar(x - w / 2, local_acc, width=w, label="local", color="tab:blue")
    ax.bar(x + w / 2, global_acc, width=w, label="global (thresholded)", color="tab:orange")
    ax.set_xlabel("patch")
    ax.set_ylabel("per-patch accuracy")
    ax.set_xticks(x)
    ax.set_ylim(0, 1.05)
    ax.set_title("Per-patch identification accuracy")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
