"""Ranking/calibration metrics and gate-weight statistics."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

EPS = 1e-7


class UndefinedMetricError(ValueError):
    pass


def _as_labels(labels) -> np.ndarray:
    y = np.asarray(labels)
    if y.size and not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    return y.astype(np.int64)


def average_ranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks; tied values share the mean of their positions."""
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    starts = np.flatnonzero(np.r_[True, xs[1:] != xs[:-1]])
    ends = np.r_[starts[1:], len(xs)]
    mean_rank = (starts + ends + 1) / 2.0  # mean of (start+1 .. end)
    ranks = np.empty(len(x), dtype=np.float64)
    ranks[order] = np.repeat(mean_rank, ends - starts)
    return ranks


def auc(scores, labels) -> float:
    """Area under the ROC curve via the Mann-Whitney rank statistic."""
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = _as_labels(labels).reshape(-1)
    if s.shape != y.shape:
        raise ValueError(f"scores {s.shape} and labels {y.shape} differ")
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC needs both positive and negative labels")
    r = average_ranks(s)
    u = r[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def auc_pairwise(scores, labels) -> float:
    """O(n^2) reference: fraction of positive/negative pairs ranked correctly, ties 1/2."""
    s = np.asarray(scores, dtype=np.float64)
    y = _as_labels(labels)
    pos, neg = s[y == 1], s[y == 0]
    if len(pos) == 0 or len(neg) == 0:
        raise UndefinedMetricError("AUC needs both positive and negative labels")
    diff = pos[:, None] - neg[None, :]
    return float(((diff > 0).sum() + 0.5 * (diff == 0).sum()) / diff.size)


def logloss(probs, labels) -> float:
    """Mean binary cross-entropy with probabilities clamped to ``[1e-7, 1 - 1e-7]``."""
    p = np.clip(np.asarray(probs, dtype=np.float64).reshape(-1), EPS, 1 - EPS)
    y = _as_labels(labels).reshape(-1)
    if p.shape != y.shape:
        raise ValueError(f"probabilities {p.shape} and labels {y.shape} differ")
    if p.size == 0:
        raise UndefinedMetricError("logloss of an empty set")
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))


@dataclass
class GateStats:
    mean: float
    mean_complement: float
    count: int
    bin_edges: np.ndarray
    counts: np.ndarray

    def write_histogram(self, path: Path | str) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["bin_low", "bin_high", "count"])
            for lo, hi, c in zip(self.bin_edges[:-1], self.bin_edges[1:], self.counts):
                w.writerow([f"{lo:.2f}", f"{hi:.2f}", int(c)])

    def summary(self) -> dict[str, float]:
        return {"mean_selected": self.mean, "mean_complement": self.mean_complement,
                "sum": self.mean + self.mean_complement, "values": self.count}


def gate_stats(model, features: np.ndarray, bins: int = 100, chunk: int = 8192) -> GateStats:
    """Distribution of ``sig(W_b)`` over every element of every sampled instance."""
    edges = np.linspace(0.0, 1.0, bins + 1)
    counts = np.zeros(bins, dtype=np.int64)
    total = 0.0
    total_c = 0.0
    n = 0
    for start in range(0, len(features), chunk):
        g = model.gate_weights(features[start:start + chunk]).astype(np.float64).reshape(-1)
        counts += np.histogram(g, bins=edges)[0]
        total += g.sum()
        total_c += (1.0 - g).sum()
        n += g.size
    if n == 0:
        raise UndefinedMetricError("gate statistics of an empty sample")
    return GateStats(float(total / n), float(total_c / n), n, edges, counts)
