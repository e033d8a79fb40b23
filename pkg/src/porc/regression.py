"""Ridge regression from features to expression targets, with
leave-one-patient-out cross-validation folds."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericalError, ShapeError


@dataclass
class RidgeModel:
    weights: np.ndarray  # (features, targets)
    x_mean: np.ndarray
    y_mean: np.ndarray


def fit_ridge(features, targets, lam: float = 1.0) -> RidgeModel:
    """Closed-form fit on centered data: (X'X + lam I) W = X'Y.

    lam = 0 degenerates to least squares and demands full column rank;
    a rank-deficient design raises instead of silently pseudo-inverting.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    if x.ndim != 2 or y.ndim != 2:
        raise ShapeError("ridge: features and targets must be 2-D")
    if x.shape[0] != y.shape[0]:
        raise ShapeError(f"ridge: {x.shape[0]} feature rows vs {y.shape[0]} target rows")
    if x.shape[0] < 1:
        raise ConfigError("ridge: no training rows")
    if lam < 0:
        raise ConfigError(f"ridge: lam must be >= 0, got {lam}")

    x_mean = x.mean(axis=0)
    y_mean = y.mean(axis=0)
    xc = x - x_mean
    yc = y - y_mean
    if lam == 0.0 and np.linalg.matrix_rank(xc) < x.shape[1]:
        raise NumericalError("ridge: design is rank-deficient and lam is 0")
    gram = xc.T @ xc + lam * np.eye(x.shape[1])
    try:
        w = np.linalg.solve(gram, xc.T @ yc)
    except np.linalg.LinAlgError as e:
        raise NumericalError(f"ridge: normal equations unsolvable: {e}") from e
    return RidgeModel(weights=w, x_mean=x_mean, y_mean=y_mean)


def predict_ridge(model: RidgeModel, features) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.weights.shape[0]:
        raise ShapeError(
            f"ridge: expected (n, {model.weights.shape[0]}) features, got {x.shape}"
        )
    return (x - model.x_mean) @ model.weights + model.y_mean


def lopo_folds(patients) -> list[tuple[str, np.ndarray, np.ndarray]]:
    """One (held-out patient, train indices, test indices) triple per
    patient, ordered by patient id so fold order is reproducible."""
    p = np.asarray(patients)
    if p.ndim != 1 or p.shape[0] == 0:
        raise ShapeError("lopo: patients must be a non-empty 1-D vector")
    unique = sorted({str(v) for v in p})
    if len(unique) < 2:
        raise ConfigError("lopo: need at least two patients to cross-validate")
    folds = []
    labels = p.astype(str)
    for patient in unique:
        test = np.flatnonzero(labels == patient)
        train = np.flatnonzero(labels != patient)
        folds.append((patient, train, test))
    return folds


def run_lopo(features, targets, patients, lam: float = 1.0) -> np.ndarray:
    """Out-of-fold predictions for every row, assembled across folds."""
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    pred = np.zeros_like(y)
    for _, train, test in lopo_folds(patients):
        model = fit_ridge(x[train], y[train], lam)
        pred[test] = predict_ridge(model, x[test])
    return pred
