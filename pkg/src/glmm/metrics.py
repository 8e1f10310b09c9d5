"""Clustering and graph-recovery metrics.

Mixture components are only identified up to relabelling, so every
metric that compares estimated clusters to ground truth first aligns
them with :func:`align_clusters`.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .graph import Graph
from .sampling import one_hot

EXHAUSTIVE_MAX_K = 8
DEFAULT_THRESHOLD_RATIO = 1e-4


@dataclass
class MetricReport:
    clustering_nmse_percent: float | None
    per_graph_f: list[float] = field(default_factory=list)
    aligned_permutation: list[int] = field(default_factory=list)

    @property
    def mean_f(self) -> float | None:
        vals = [f for f in self.per_graph_f if f is not None]
        return float(np.mean(vals)) if vals else None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mean_f"] = self.mean_f
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv_row(self) -> str:
        """Flat single-row CSV (with header) for aggregation across runs."""
        cols = {"clustering_nmse_percent": self.clustering_nmse_percent, "mean_f": self.mean_f}
        for k, f in enumerate(self.per_graph_f):
            cols[f"f_{k}"] = f
        cols["permutation"] = " ".join(map(str, self.aligned_permutation))
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols.keys())
        w.writerow(["" if v is None else (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for v in cols.values()])
        return buf.getvalue()


def _as_one_hot(z: np.ndarray, k: int | None = None) -> np.ndarray:
    z = np.asarray(z)
    if z.ndim == 1:
        return one_hot(z, k)
    return z.astype(float)


def align_clusters(gamma: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Permutation ``perm`` minimising ``|z - gamma[:, perm]|_F^2``.

    ``perm[k]`` is the estimated cluster matched with true cluster ``k``.
    Exhaustive for ``K <= 8``, Hungarian assignment above that. Ties go to
    the lexicographically first permutation.
    """
    gamma = np.asarray(gamma, dtype=float)
    z = _as_one_hot(z, gamma.shape[1])
    if gamma.shape != z.shape:
        raise ValueError(f"shape mismatch: gamma {gamma.shape} vs labels {z.shape}")
    k = gamma.shape[1]
    # |z - gP|^2 = const - 2 tr(z^T g P) for fixed column norms; maximise the overlap
    overlap = z.T @ gamma
    if k <= EXHAUSTIVE_MAX_K:
        best, best_val = None, -np.inf
        for perm in itertools.permutations(range(k)):
            val = overlap[np.arange(k), perm].sum()
            if val > best_val + 1e-12:
                best, best_val = perm, val
        return np.array(best)
    rows, cols = linear_sum_assignment(-overlap)
    perm = np.empty(k, dtype=int)
    perm[rows] = cols
    return perm


def clustering_nmse(gamma: np.ndarray, z: np.ndarray) -> float:
    """``100 / (2M) * |z - gamma P|_F^2`` after optimal alignment."""
    gamma = np.asarray(gamma, dtype=float)
    z = _as_one_hot(z, gamma.shape[1])
    perm = align_clusters(gamma, z)
    return float(100.0 * np.sum((z - gamma[:, perm]) ** 2) / (2.0 * gamma.shape[0]))


def default_threshold(g: Graph) -> float:
    return DEFAULT_THRESHOLD_RATIO * float(g.weights.max(initial=0.0))


def edge_support(g: Graph, threshold: float) -> np.ndarray:
    """Boolean vector over ``i < j`` pairs with ``W_ij >= threshold`` (and nonzero)."""
    iu = np.triu_indices(g.n, k=1)
    w = g.weights[iu]
    return (w > 0) & (w >= threshold)


def edge_f_measure(learned: Graph, truth: Graph, threshold: float | None = None) -> float:
    if learned.n != truth.n:
        raise ValueError("graphs have different vertex counts")
    if threshold is None:
        threshold = default_threshold(learned)
    est = edge_support(learned, threshold)
    ref = edge_support(truth, 0.0)
    if not est.any() and not ref.any():
        return 1.0
    if not est.any() or not ref.any():
        return 0.0
    tp = float(np.sum(est & ref))
    if tp == 0:
        return 0.0
    precision = tp / est.sum()
    recall = tp / ref.sum()
    return float(2 * precision * recall / (precision + recall))


def evaluate(
    gamma: np.ndarray | None,
    z: np.ndarray | None,
    learned: list[Graph | None] | None = None,
    truth: list[Graph] | None = None,
    threshold: float | None = None,
) -> MetricReport:
    """Align clusters, then compute NMSE and per-true-graph F-measures.

    ``per_graph_f[k]`` scores the learned graph matched with true cluster
    ``k``; a missing learned graph scores 0.
    """
    nmse = None
    k = len(truth) if truth is not None else (gamma.shape[1] if gamma is not None else 0)
    perm = np.arange(k)
    if gamma is not None and z is not None:
        perm = align_clusters(gamma, z)
        nmse = clustering_nmse(gamma, z)
    fs = []
    if learned is not None and truth is not None:
        for kk, g_true in enumerate(truth):
            g_est = learned[perm[kk]]
            fs.append(0.0 if g_est is None else edge_f_measure(g_est, g_true, threshold))
    return MetricReport(nmse, fs, [int(p) for p in perm])


def consistency_nmse(daily_labelings: list[np.ndarray], k: int | None = None) -> float:
    """Average pairwise clustering NMSE between days (ordered pairs, local alignment)."""
    days = [np.asarray(d, dtype=int) for d in daily_labelings]
    if len(days) < 2:
        raise ValueError("need at least two days")
    slots = {d.size for d in days}
    if len(slots) != 1:
        raise ValueError(f"days have different slot counts {sorted(slots)}")
    if k is None:
        k = 1 + max(int(d.max()) for d in days)
    hots = [one_hot(d, k) for d in days]
    vals = [clustering_nmse(hots[j], hots[i]) for i in range(len(days)) for j in range(len(days)) if i != j]
    return float(np.mean(vals))
