"""Self-distillation objectives: view-level, masked-token, and spreading terms.

The teacher side of every objective is detached: teacher logits enter as
plain arrays (or are read out of a Tensor), are centered and sharpened in
numpy, and never receive gradients. Only the student side participates in
the autodiff graph.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, ShapeError


def _teacher_probs(logits: np.ndarray, center: np.ndarray | None, temp: float) -> np.ndarray:
    """softmax((logits - center) / temp) computed row-wise in numpy."""
    z = logits.astype(np.float64)
    if center is not None:
        c = np.asarray(center, dtype=np.float64)
        if c.shape != (z.shape[-1],):
            raise ShapeError(
                f"center shape {c.shape} does not match logit width {z.shape[-1]}"
            )
        z = z - c
    z = z / temp
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _detach(logits) -> np.ndarray:
    arr = logits.data if isinstance(logits, Tensor) else np.asarray(logits, dtype=np.float64)
    return np.atleast_2d(np.asarray(arr, dtype=np.float64))


def dino_loss(
    teacher_logits,
    student_logits: Tensor,
    center: np.ndarray | None = None,
    teacher_temp: float = 1.0,
    student_temp: float = 1.0,
    n_shared_views: int = 0,
) -> Tensor:
    """Cross-entropy from sharpened teacher views to student views.

    teacher_logits: (Vt, K) array-like, detached targets (a 1-D row is one view).
    student_logits: (Vs, K) Tensor on the gradient path.
    n_shared_views: the first ``n_shared_views`` student rows are the same
        underlying views as the teacher rows with equal index; those
        same-view pairs are excluded. All remaining (teacher, student)
        pairs contribute, and the result is their mean.
    """
    t = _detach(teacher_logits)
    if student_logits.ndim == 1:
        student_logits = ad.reshape(student_logits, (1, student_logits.shape[0]))
    vt, k = t.shape
    vs, ks = student_logits.shape
    if k != ks:
        raise ShapeError(f"dino_loss: prototype counts differ, teacher {k} vs student {ks}")
    p_t = _teacher_probs(t, center, teacher_temp)

    # weight[u] = sum of teacher distributions paired with student view u
    weights = np.zeros((vs, k), dtype=np.float64)
    n_pairs = 0
    for v in range(vt):
        for u in range(vs):
            if u == v and u < n_shared_views:
                continue
            weights[u] += p_t[v]
            n_pairs += 1
    if n_pairs == 0:
        raise ConfigError("dino_loss: view pairing excluded every pair")

    ls = ad.log_softmax(student_logits, temperature=student_temp)
    total = ad.tsum(ad.mul(Tensor(weights), ls))
    return ad.mul(total, Tensor(-1.0 / n_pairs))


def ibot_loss(
    teacher_token_logits,
    student_token_logits: Tensor,
    mask,
    center: np.ndarray | None = None,
    teacher_temp: float = 1.0,
    student_temp: float = 1.0,
) -> Tensor:
    """Masked-token cross-entropy, averaged over masked positions.

    Both logit blocks are (n_tokens, K), aligned row-for-row; ``mask`` is a
    boolean vector selecting the masked positions. No masked position
    yields an exact 0 loss.
    """
    t = _detach(teacher_token_logits)
    m = np.asarray(mask, dtype=bool)
    if student_token_logits.ndim != 2:
        raise ShapeError(
            f"ibot_loss: student token logits must be 2-D, got {student_token_logits.shape}"
        )
    if t.shape != student_token_logits.shape:
        raise ShapeError(
            f"ibot_loss: token blocks differ, teacher {t.shape} vs "
            f"student {student_token_logits.shape}"
        )
    if m.shape != (t.shape[0],):
        raise ShapeError(f"ibot_loss: mask shape {m.shape} does not match {t.shape[0]} tokens")
    n_masked = int(m.sum())
    if n_masked == 0:
        return Tensor(0.0)

    p_t = _teacher_probs(t[m], center, teacher_temp)
    s_masked = ad.mask_select(student_token_logits, m)
    ls = ad.log_softmax(s_masked, temperature=student_temp)
    total = ad.tsum(ad.mul(Tensor(p_t), ls))
    return ad.mul(total, Tensor(-1.0 / n_masked))


def koleo_loss(features: Tensor, eps: float = 1e-8) -> Tensor:
    """Differential-entropy spreading term: -(1/n) sum_i log d(i, nn(i)).

    Rows are L2-normalized first; nearest-neighbor distances are floored
    at ``eps`` so coincident points stay finite. Nearest-neighbor indices
    are treated as constants of the gradient.
    """
    if features.ndim != 2:
        raise ShapeError(f"koleo_loss: features must be 2-D, got {features.shape}")
    n = features.shape[0]
    if n < 2:
        raise ConfigError(f"koleo_loss: need at least 2 rows, got {n}")

    f = ad.l2_normalize(features)
    fv = f.data
    # ||a-b||^2 = 2 - 2 a.b on the unit sphere
    sims = fv @ fv.T
    np.fill_diagonal(sims, -np.inf)
    nn_idx = sims.argmax(axis=1)

    diff = ad.sub(f, ad.take_rows(f, nn_idx))
    d2 = ad.tsum(ad.mul(diff, diff), axis=1)
    d2 = ad.clip_min(d2, eps * eps)
    # log d = 0.5 log d^2, so the floor on d is a floor of eps^2 on d^2
    return ad.mul(ad.tmean(ad.log(d2)), Tensor(-0.5))


def update_center(center: np.ndarray, batch_logits: np.ndarray, momentum: float = 0.9) -> np.ndarray:
    """EMA of the teacher logit mean: c <- m c + (1 - m) mean(batch rows)."""
    if not 0.0 <= momentum <= 1.0:
        raise ConfigError(f"update_center: momentum must be in [0, 1], got {momentum}")
    batch = np.atleast_2d(np.asarray(batch_logits, dtype=np.float64))
    c = np.asarray(center, dtype=np.float64)
    if batch.shape[1] != c.shape[0]:
        raise ShapeError(
            f"update_center: center width {c.shape[0]} != logit width {batch.shape[1]}"
        )
    return momentum * c + (1.0 - momentum) * batch.mean(axis=0)
