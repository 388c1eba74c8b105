"""Cluster extraction from fused fits and partition/coefficient metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linear_sum_assignment
from scipy.sparse.csgraph import connected_components

__all__ = [
    "ClusterLabels",
    "canonical_labels",
    "labels_from_pairs",
    "extract_clusters",
    "group_by_tolerance",
    "rand_index",
    "clustering_accuracy",
    "relative_cluster_count",
    "coefficient_bias",
    "coefficient_mse",
    "coefficient_mse_full",
]


@dataclass(frozen=True)
class ClusterLabels:
    """Labels ``0..K-1`` numbered by each cluster's smallest member."""

    labels: np.ndarray
    K: int

    @property
    def n(self) -> int:
        return len(self.labels)

    def members(self):
        return [np.flatnonzero(self.labels == k) for k in range(self.K)]


def canonical_labels(labels):
    """Relabel arbitrary hashable labels to ``0..K-1`` by first appearance."""
    labels = np.asarray(labels)
    _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
    rank = np.empty(len(first), dtype=np.int64)
    rank[np.argsort(first)] = np.arange(len(first))
    out = rank[inverse.reshape(-1)]
    return ClusterLabels(labels=out, K=len(first))


def labels_from_pairs(pairs, n):
    """Connected components of the graph whose edges are ``pairs``."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    g = sparse.coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, comp = connected_components(g, directed=False)
    return canonical_labels(comp)


def extract_clusters(fit, n=None):
    """Clusters implied by the exactly-zero pair differences of a fit."""
    n = fit.n if n is None else n
    return labels_from_pairs(fit.fused_pairs, n)


def group_by_tolerance(beta, rtol=1e-4):
    """Group rows of an external coefficient matrix that agree within ``rtol``.

    Rows ``i`` and ``j`` are linked when ``||b_i - b_j|| <= rtol * max(1, max_k ||b_k||)``;
    clusters are the connected components of those links.
    """
    beta = np.asarray(beta, dtype=float)
    if beta.ndim == 1:
        beta = beta[:, None]
    n = beta.shape[0]
    scale = max(1.0, float(np.linalg.norm(beta, axis=1).max(initial=0.0)))
    i, j = np.triu_indices(n, 1)
    close = np.linalg.norm(beta[i] - beta[j], axis=1) <= rtol * scale
    return labels_from_pairs(np.column_stack([i[close], j[close]]), n)


def _as_labels(x):
    return x.labels if isinstance(x, ClusterLabels) else np.asarray(x)


def rand_index(truth, est):
    """Fraction of unit pairs on which two partitions agree."""
    a, b = _as_labels(truth), _as_labels(est)
    if a.shape != b.shape:
        raise ValueError("labelings have different lengths")
    n = len(a)
    if n < 2:
        raise ValueError("rand index needs at least two units")
    _, a = np.unique(a, return_inverse=True)
    _, b = np.unique(b, return_inverse=True)
    table = np.zeros((a.max() + 1, b.max() + 1))
    np.add.at(table, (a, b), 1)
    comb = lambda v: v * (v - 1) / 2.0  # noqa: E731
    total = comb(n)
    same_both = comb(table).sum()
    same_a = comb(table.sum(axis=1)).sum()
    same_b = comb(table.sum(axis=0)).sum()
    agree = total + 2 * same_both - same_a - same_b
    return float(agree / total)


def clustering_accuracy(truth, est):
    """Share of units correctly labelled under the best one-to-one matching."""
    a, b = _as_labels(truth), _as_labels(est)
    if a.shape != b.shape:
        raise ValueError("labelings have different lengths")
    if len(a) == 0:
        return 1.0
    _, a = np.unique(a, return_inverse=True)
    _, b = np.unique(b, return_inverse=True)
    table = np.zeros((a.max() + 1, b.max() + 1))
    np.add.at(table, (a, b), 1)
    rows, cols = linear_sum_assignment(table, maximize=True)
    return float(table[rows, cols].sum() / len(a))


def relative_cluster_count(estimated_counts, true_count):
    counts = np.asarray(list(estimated_counts), dtype=float)
    if counts.size == 0:
        raise ValueError("need at least one estimated count")
    if true_count < 1:
        raise ValueError("true_count must be at least 1")
    return float(counts.mean() / true_count)


def _check_replicates(est, truth):
    est = np.asarray(est, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if est.ndim == truth.ndim:
        est = est[None]
    if est.shape[1:] != truth.shape:
        raise ValueError(f"estimates {est.shape[1:]} do not match truth {truth.shape}")
    if est.shape[0] < 1:
        raise ValueError("need at least one replicate")
    if truth.ndim == 1:
        est, truth = est[:, None, :], truth[None, :]
    return est, truth


def coefficient_bias(replicate_estimates, truth):
    """Unit-averaged norm of the replicate-mean error.

    ``replicate_estimates`` has shape (R, n, k) and ``truth`` (n, k); a
    shared coefficient vector may be passed as (R, k) and (k,).
    """
    est, truth = _check_replicates(replicate_estimates, truth)
    return float(np.linalg.norm(est.mean(axis=0) - truth, axis=1).mean())


def coefficient_mse(replicate_estimates, truth):
    """Unit-averaged squared norm of the replicate-mean error."""
    est, truth = _check_replicates(replicate_estimates, truth)
    return float((np.linalg.norm(est.mean(axis=0) - truth, axis=1) ** 2).mean())


def coefficient_mse_full(replicate_estimates, truth):
    """Unit-averaged mean over replicates of the squared error norm."""
    est, truth = _check_replicates(replicate_estimates, truth)
    return float(((est - truth[None]) ** 2).sum(axis=2).mean())
