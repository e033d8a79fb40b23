"""Reproducible dataset partitioning.

Part sizes come from largest-remainder apportionment, stratification
holds every class within one sample of its ideal share, and grouped
rows (for example all patches of one slide) never straddle parts.
"""

from __future__ import annotations

import warnings

import numpy as np

from .errors import ConfigError, ShapeError


def parse_ratio(text: str) -> tuple[int, ...]:
    """'7:3' -> (7, 3). Parts must be positive integers."""
    pieces = str(text).split(":")
    try:
        ratio = tuple(int(p) for p in pieces)
    except ValueError as e:
        raise ConfigError(f"parse_ratio: '{text}' is not of the form 'a:b[:c]'") from e
    if len(ratio) < 2 or any(r <= 0 for r in ratio):
        raise ConfigError(f"parse_ratio: '{text}' needs >= 2 positive parts")
    return ratio


def allocate(total: int, weights) -> list[int]:
    """Integer apportionment by largest remainder; ties favor earlier parts."""
    w = np.asarray(weights, dtype=np.float64)
    if total < 0 or w.ndim != 1 or len(w) == 0 or (w <= 0).any():
        raise ConfigError("allocate: need total >= 0 and positive weights")
    ideal = total * w / w.sum()
    counts = np.floor(ideal).astype(int)
    remainder = ideal - counts
    short = total - int(counts.sum())
    # stable sort keeps earlier parts first among equal remainders
    for i in np.argsort(-remainder, kind="stable")[:short]:
        counts[i] += 1
    return counts.tolist()


def _plain_split(n, ratio, rng):
    counts = allocate(n, ratio)
    order = rng.permutation(n)
    parts, start = [], 0
    for c in counts:
        parts.append(order[start : start + c])
        start += c
    return parts


def _stratified_split(labels, ratio, rng):
    parts = [[] for _ in ratio]
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        counts = allocate(len(members), ratio)
        order = rng.permutation(members)
        start = 0
        for part, cnt in zip(parts, counts):
            part.extend(order[start : start + cnt].tolist())
            start += cnt
    return [np.array(sorted(p), dtype=int) for p in parts]


def _grouped_split(groups, ratio, rng):
    ids = np.unique(groups)
    sizes = {g: int((groups == g).sum()) for g in ids}
    # biggest groups placed first; equal sizes in random order
    order = sorted(rng.permutation(ids).tolist(), key=lambda g: -sizes[g])
    targets = allocate(len(groups), ratio)
    filled = [0] * len(ratio)
    assignment = {}
    for g in order:
        deficits = [t - f for t, f in zip(targets, filled)]
        part = int(np.argmax(deficits))
        assignment[g] = part
        filled[part] += sizes[g]
    parts = [[] for _ in ratio]
    for i, g in enumerate(groups):
        parts[assignment[g]].append(i)
    return [np.array(p, dtype=int) for p in parts]


def split_indices(n: int, ratio, seed: int = 0, labels=None, groups=None) -> list[np.ndarray]:
    """Partition range(n) into len(ratio) parts.

    labels: stratify so each class lands within 1 of its ideal count per
    part. groups: keep equal group ids in one part. Asking for both
    falls back to the grouped split with a warning, because exact
    stratification cannot be guaranteed once groups are atomic.
    """
    if isinstance(ratio, str):
        ratio = parse_ratio(ratio)
    if n < 0:
        raise ConfigError(f"split_indices: n must be >= 0, got {n}")
    rng = np.random.default_rng(seed)
    if labels is not None:
        labels = np.asarray(labels)
        if labels.shape != (n,):
            raise ShapeError(f"split_indices: labels shape {labels.shape} != ({n},)")
    if groups is not None:
        groups = np.asarray(groups)
        if groups.shape != (n,):
            raise ShapeError(f"split_indices: groups shape {groups.shape} != ({n},)")

    if groups is not None:
        if labels is not None:
            warnings.warn(
                "split_indices: stratification is approximate when groups are "
                "atomic; using the grouped split",
                stacklevel=2,
            )
        return _grouped_split(groups, ratio, rng)
    if labels is not None:
        return _stratified_split(labels, ratio, rng)
    return _plain_split(n, ratio, rng)
