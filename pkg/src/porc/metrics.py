"""Evaluation metrics: classification, ranking, overlap, detection,
segmentation, and correlation.

Conventions chosen once and kept everywhere: tied scores get average
ranks, undefined per-class F1 counts as 0, overlap of two empty masks
counts as perfect, and a correlation against a constant vector counts
as 0 (with a log line, since it usually means a degenerate target).
"""

from __future__ import annotations

import logging
from fractions import Fraction

import numpy as np
from scipy.stats import rankdata

from .errors import MetricError, ShapeError

log = logging.getLogger(__name__)


def _pair(y_true, y_pred) -> tuple[np.ndarray, np.ndarray]:
    t = np.asarray(y_true).ravel()
    p = np.asarray(y_pred).ravel()
    if t.shape != p.shape:
        raise ShapeError(f"metrics: {t.shape[0]} true vs {p.shape[0]} predicted")
    if t.shape[0] == 0:
        raise MetricError("metrics: empty inputs")
    return t, p


def accuracy(y_true, y_pred) -> float:
    t, p = _pair(y_true, y_pred)
    return float((t == p).mean())


def balanced_accuracy(y_true, y_pred) -> float:
    """Mean per-class recall over the classes present in y_true."""
    t, p = _pair(y_true, y_pred)
    recalls = [float((p[t == c] == c).mean()) for c in np.unique(t)]
    return float(np.mean(recalls))


def weighted_f1(y_true, y_pred) -> float:
    """Support-weighted F1 over classes present in y_true; a class with
    no true positives and no predictions scores 0 rather than NaN."""
    t, p = _pair(y_true, y_pred)
    total = 0.0
    for c in np.unique(t):
        tp = float(((t == c) & (p == c)).sum())
        fp = float(((t != c) & (p == c)).sum())
        fn = float(((t == c) & (p != c)).sum())
        denom = 2 * tp + fp + fn
        f1 = 0.0 if denom == 0 else 2 * tp / denom
        total += (t == c).sum() * f1
    return float(total / t.shape[0])


def auroc(y_true, scores) -> float:
    """Binary ranking quality: P(score_pos > score_neg), ties half."""
    t, s = _pair(y_true, scores)
    pos = t == 1
    n_pos = int(pos.sum())
    n_neg = t.shape[0] - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("auroc: needs both classes present")
    if not np.isin(t, (0, 1)).all():
        raise MetricError("auroc: labels must be 0/1")
    ranks = rankdata(s, method="average")
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def macro_auroc(y_true, score_matrix) -> float:
    """One-vs-rest AUROC averaged over the classes present in y_true."""
    t = np.asarray(y_true).ravel()
    s = np.asarray(score_matrix, dtype=np.float64)
    if s.ndim != 2 or s.shape[0] != t.shape[0]:
        raise ShapeError(f"macro_auroc: score matrix {s.shape} vs {t.shape[0]} labels")
    classes = np.unique(t)
    if classes.size < 2:
        raise MetricError("macro_auroc: needs at least two classes present")
    aucs = [auroc((t == c).astype(int), s[:, int(c)]) for c in classes]
    return float(np.mean(aucs))


# ------------------------------------------------------------------ overlap

def mask_iou(a, b) -> float:
    """Intersection over union of two boolean masks; empty vs empty is 1."""
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise ShapeError(f"mask_iou: shapes {a.shape} vs {b.shape}")
    union = (a | b).sum()
    if union == 0:
        return 1.0
    return float((a & b).sum() / union)


def mask_dice(a, b) -> float:
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise ShapeError(f"mask_dice: shapes {a.shape} vs {b.shape}")
    total = a.sum() + b.sum()
    if total == 0:
        return 1.0
    return float(2.0 * (a & b).sum() / total)


def box_iou(a, b) -> float:
    """IoU of two (x0, y0, x1, y1) boxes; degenerate boxes have area 0."""
    ax0, ay0, ax1, ay1 = (float(v) for v in a)
    bx0, by0, bx1, by1 = (float(v) for v in b)
    if ax1 < ax0 or ay1 < ay0 or bx1 < bx0 or by1 < by0:
        raise MetricError("box_iou: box corners out of order")
    iw = max(0.0, min(ax1, bx1) - max(ax0, bx0))
    ih = max(0.0, min(ay1, by1) - max(ay0, by0))
    inter = iw * ih
    union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
    if union == 0.0:
        return 1.0 if inter == 0.0 else 0.0
    return inter / union


# ---------------------------------------------------------------- detection

def _overlap(a, b, kind: str) -> float:
    return box_iou(a, b) if kind == "box" else mask_iou(a, b)


def average_precision(predictions, truths, iou_threshold: float = 0.5, kind: str = "box") -> float:
    """Single-class AP with greedy matching and the all-point envelope.

    predictions: (image_id, confidence, region) triples; truths:
    (image_id, region) pairs. ``region`` is a box or a boolean mask per
    ``kind``. Predictions are matched in descending confidence to the
    best still-unmatched truth of the same image at or above the
    threshold; AP integrates precision over recall with precision
    replaced by its running maximum from the right.
    """
    if kind not in ("box", "mask"):
        raise MetricError(f"average_precision: unknown kind '{kind}'")
    if not truths:
        raise MetricError("average_precision: no ground-truth regions")
    order = sorted(range(len(predictions)), key=lambda i: -float(predictions[i][1]))
    matched: set[tuple] = set()
    tp = np.zeros(len(order))
    fp = np.zeros(len(order))
    by_image: dict = {}
    for j, (img, region) in enumerate(truths):
        by_image.setdefault(img, []).append((j, region))
    for rank, i in enumerate(order):
        img, _, region = predictions[i]
        best, best_j = 0.0, -1
        for j, truth_region in by_image.get(img, []):
            if j in matched:
                continue
            ov = _overlap(region, truth_region, kind)
            if ov > best:
                best, best_j = ov, j
        if best >= iou_threshold and best_j >= 0:
            matched.add(best_j)
            tp[rank] = 1.0
        else:
            fp[rank] = 1.0

    if len(order) == 0:
        return 0.0
    cum_tp = np.cumsum(tp)
    cum_fp = np.cumsum(fp)
    recall = cum_tp / len(truths)
    precision = cum_tp / (cum_tp + cum_fp)
    # envelope: precision at recall r is the max precision at recall >= r
    env = np.maximum.accumulate(precision[::-1])[::-1]
    ap = 0.0
    prev_r = 0.0
    for r, p in zip(recall, env):
        ap += (r - prev_r) * p
        prev_r = r
    return float(ap)


def mean_average_precision(
    predictions_by_class: dict, truths_by_class: dict, iou_threshold: float = 0.5, kind: str = "box"
) -> float:
    """Mean AP over every class that has ground truth."""
    if not truths_by_class:
        raise MetricError("mean_average_precision: no ground truth at all")
    aps = [
        average_precision(predictions_by_class.get(c, []), truths, iou_threshold, kind)
        for c, truths in sorted(truths_by_class.items())
    ]
    return float(np.mean(aps))


# ------------------------------------------------------------- segmentation

def segmentation_scores(pred_labels, true_labels) -> dict[str, float]:
    """Label-map agreement: overall pixel accuracy, mean per-class
    accuracy (classes present in truth), and mean IoU / Dice over
    classes present in either map."""
    p = np.asarray(pred_labels).ravel()
    t = np.asarray(true_labels).ravel()
    if p.shape != t.shape:
        raise ShapeError(f"segmentation_scores: {p.shape} vs {t.shape}")
    if t.shape[0] == 0:
        raise MetricError("segmentation_scores: empty label maps")
    # per-class means as exact rationals over the integer pixel counts;
    # rounding once at the end keeps hand-derived values like 5/6 bit-exact
    accs = [Fraction(int((p[t == c] == c).sum()), int((t == c).sum())) for c in np.unique(t)]
    ious, dices = [], []
    for c in np.unique(np.concatenate([t, p])):
        inter = int(((t == c) & (p == c)).sum())
        t_c = int((t == c).sum())
        p_c = int((p == c).sum())
        ious.append(Fraction(inter, t_c + p_c - inter))
        dices.append(Fraction(2 * inter, t_c + p_c))
    return {
        "pixel_accuracy": float(Fraction(int((p == t).sum()), int(t.shape[0]))),
        "mean_pixel_accuracy": float(sum(accs) / len(accs)),
        "mean_iou": float(sum(ious) / len(ious)),
        "mean_dice": float(sum(dices) / len(dices)),
    }


# -------------------------------------------------------------- correlation

def pearson(x, y) -> float:
    """Pearson r; a constant input yields 0 instead of NaN."""
    a, b = _pair(x, y)
    a = a.astype(np.float64)
    b = b.astype(np.float64)
    ac = a - a.mean()
    bc = b - b.mean()
    denom = np.sqrt((ac * ac).sum() * (bc * bc).sum())
    if denom == 0.0:
        log.warning("pearson: zero-variance input, reporting 0")
        return 0.0
    return float((ac * bc).sum() / denom)


def pearson_mean(y_true, y_pred) -> float:
    """Mean per-column Pearson r between two (samples, targets) matrices."""
    t = np.asarray(y_true, dtype=np.float64)
    p = np.asarray(y_pred, dtype=np.float64)
    if t.ndim == 1:
        t = t[:, None]
    if p.ndim == 1:
        p = p[:, None]
    if t.shape != p.shape:
        raise ShapeError(f"pearson_mean: shapes {t.shape} vs {p.shape}")
    if t.shape[0] == 0 or t.shape[1] == 0:
        raise MetricError("pearson_mean: empty matrices")
    return float(np.mean([pearson(t[:, j], p[:, j]) for j in range(t.shape[1])]))
