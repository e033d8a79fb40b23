"""Linear probing on frozen features: multinomial logistic regression.

Weights start at zero and full-batch gradient descent runs until the
loss stops improving, so a fit is a pure function of its inputs (no
randomness anywhere).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError


@dataclass
class ProbeModel:
    weights: np.ndarray  # (features, classes)
    bias: np.ndarray  # (classes,)
    n_iters: int = 0
    final_loss: float = 0.0


def _check_labels(labels: np.ndarray, n_classes: int) -> np.ndarray:
    y = np.asarray(labels)
    if y.ndim != 1 or not np.issubdtype(y.dtype, np.integer):
        raise ShapeError("probe: labels must be a 1-D integer vector")
    if y.min() < 0 or y.max() >= n_classes:
        raise ConfigError(f"probe: labels outside [0, {n_classes})")
    return y


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def train_probe(
    features: np.ndarray,
    labels: np.ndarray,
    n_classes: int | None = None,
    lr: float = 0.1,
    max_iters: int = 1000,
    tol: float = 1e-9,
) -> ProbeModel:
    """Fit by full-batch descent; stops when the loss improves by < tol."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"probe: features must be 2-D, got shape {x.shape}")
    if x.shape[0] == 0:
        raise ConfigError("probe: no training rows")
    if n_classes is None:
        n_classes = int(np.max(labels)) + 1
    y = _check_labels(labels, n_classes)
    if x.shape[0] != y.shape[0]:
        raise ShapeError("probe: feature rows and labels disagree")

    n, d = x.shape
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), y] = 1.0
    w = np.zeros((d, n_classes))
    b = np.zeros(n_classes)

    prev = np.inf
    loss = prev
    it = 0
    for it in range(1, max_iters + 1):
        p = _softmax(x @ w + b)
        loss = float(-np.log(np.clip(p[np.arange(n), y], 1e-300, None)).mean())
        if prev - loss < tol:
            break
        prev = loss
        residual = (p - onehot) / n
        w -= lr * (x.T @ residual)
        b -= lr * residual.sum(axis=0)
    return ProbeModel(weights=w, bias=b, n_iters=it, final_loss=loss)


def predict_proba(model: ProbeModel, features: np.ndarray) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.weights.shape[0]:
        raise ShapeError(
            f"probe: expected (n, {model.weights.shape[0]}) features, got {x.shape}"
        )
    return _softmax(x @ model.weights + model.bias)


def predict(model: ProbeModel, features: np.ndarray) -> np.ndarray:
    return predict_proba(model, features).argmax(axis=1)
