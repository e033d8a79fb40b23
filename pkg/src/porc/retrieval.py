"""Nearest-neighbor retrieval over L2-normalized features.

Distances are Euclidean after normalization, neighbor order is a stable
sort, and the two retrieval scores are top-K any-hit accuracy and
majority vote over the 5 nearest (ties broken by the closest member of
each tied class).
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, ShapeError


def _normalize_rows(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"retrieval: expected 2-D features, got shape {x.shape}")
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    return x / np.where(norms == 0.0, 1.0, norms)


def knn_search(queries, index, k: int) -> tuple[np.ndarray, np.ndarray]:
    """(neighbor indices, distances), both (n_queries, k), nearest first.

    Equal distances keep index order (stable sort), so results do not
    depend on sorting internals.
    """
    q = _normalize_rows(queries)
    ix = _normalize_rows(index)
    if q.shape[1] != ix.shape[1]:
        raise ShapeError("retrieval: query and index feature widths differ")
    if not 1 <= k <= ix.shape[0]:
        raise ConfigError(f"retrieval: k={k} outside [1, {ix.shape[0]}]")
    # squared distances suffice for ranking; clip guards roundoff
    d2 = np.clip(
        (q * q).sum(axis=1)[:, None] - 2.0 * q @ ix.T + (ix * ix).sum(axis=1)[None, :],
        0.0,
        None,
    )
    order = np.argsort(d2, axis=1, kind="stable")[:, :k]
    dists = np.sqrt(np.take_along_axis(d2, order, axis=1))
    return order, dists


def accuracy_at_k(index_labels, query_labels, neighbors: np.ndarray, k: int) -> float:
    """Fraction of queries whose true label appears in the top k."""
    il = np.asarray(index_labels)
    ql = np.asarray(query_labels)
    if neighbors.shape[0] != ql.shape[0]:
        raise ShapeError("retrieval: neighbor rows and query labels disagree")
    if k > neighbors.shape[1]:
        raise ConfigError(f"retrieval: k={k} exceeds retrieved depth {neighbors.shape[1]}")
    hits = (il[neighbors[:, :k]] == ql[:, None]).any(axis=1)
    return float(hits.mean())


def majority_vote(index_labels, neighbors: np.ndarray) -> np.ndarray:
    """Most frequent label among each row's neighbors; ties go to the
    class whose nearest member is ranked highest."""
    il = np.asarray(index_labels)
    out = np.zeros(neighbors.shape[0], dtype=il.dtype)
    for i, row in enumerate(neighbors):
        labels = il[row]
        counts: dict = {}
        first_rank: dict = {}
        for rank, lab in enumerate(labels):
            key = lab.item() if hasattr(lab, "item") else lab
            counts[key] = counts.get(key, 0) + 1
            first_rank.setdefault(key, rank)
        out[i] = min(counts, key=lambda c: (-counts[c], first_rank[c]))
    return out


def knn_classify(
    train_features, train_labels, test_features, k: int = 5
) -> tuple[np.ndarray, np.ndarray]:
    """(majority-vote predictions, neighbor indices) for the test rows."""
    neighbors, _ = knn_search(test_features, train_features, k)
    return majority_vote(train_labels, neighbors), neighbors
