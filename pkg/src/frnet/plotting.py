"""Figures written next to the CSV outputs (PNG, non-interactive backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 120,
}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return Path(path)


def learning_curves(history, path):
    """Validation AUC and train/val loss per epoch."""
    with plt.rc_context(STYLE):
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(7.0, 2.8))
        epochs = [r.epoch for r in history]
        ax1.plot(epochs, [r.val_auc for r in history], marker=".", color="C0")
        ax1.set_xlabel("epoch")
        ax1.set_ylabel("validation AUC")
        ax2.plot(epochs, [r.train_loss for r in history], label="train", color="C1")
        ax2.plot(epochs, [r.val_logloss for r in history], label="validation", color="C2")
        ax2.set_xlabel("epoch")
        ax2.set_ylabel("logloss")
        ax2.legend(frameon=False)
        return _save(fig, path)


def gate_histogram(stats, path):
    """Histogram of selected (sig(W_b)) and complementary (1 - sig(W_b)) weights."""
    edges = stats.bin_edges
    centers = 0.5 * (edges[:-1] + edges[1:])
    width = edges[1] - edges[0]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.0))
        ax.bar(centers, stats.counts, width=width, alpha=0.6, label=f"selected (mean {stats.mean:.3f})")
        ax.bar(1 - centers, stats.counts, width=width, alpha=0.6,
               label=f"complementary (mean {stats.mean_complement:.3f})")
        ax.set_xlim(0, 1)
        ax.set_xlabel("weight")
        ax.set_ylabel("count")
        ax.legend(frameon=False)
        return _save(fig, path)


def ablation_bars(rows, path):
    """Test AUC per variant; ``rows`` are dicts with ``variant`` and ``test_auc``."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6.0, 3.0))
        labels = [f"#{r['variant']}" for r in rows]
        values = [float(r["test_auc"]) for r in rows]
        ax.bar(labels, values, color=["C3" if r["variant"] == 13 else "C0" for r in rows])
        lo = min(values)
        hi = max(values)
        pad = max(hi - lo, 1e-3) * 0.25
        ax.set_ylim(lo - pad, hi + pad)
        ax.set_ylabel("test AUC")
        return _save(fig, path)
