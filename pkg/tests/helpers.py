"""Shared test oracles: central finite differences and error measures."""

from __future__ import annotations

import numpy as np


def fd_gradient(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite-difference gradient of scalar f at x, element by element."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = g.reshape(-1)
    base = x.copy().reshape(-1)
    for i in range(base.size):
        orig = base[i]
        base[i] = orig + h
        fp = f(base.reshape(x.shape))
        base[i] = orig - h
        fm = f(base.reshape(x.shape))
        base[i] = orig
        flat[i] = (fp - fm) / (2.0 * h)
    return g


def rel_err(analytic: np.ndarray, reference: np.ndarray) -> float:
    """Max elementwise |a - r| / max(1, |a|, |r|).

    The unit floor makes the measure absolute for near-zero gradients,
    which is the right scale for finite-difference noise in float64.
    """
    a = np.asarray(analytic, dtype=np.float64)
    r = np.asarray(reference, dtype=np.float64)
    denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(r)))
    return float((np.abs(a - r) / denom).max()) if a.size else 0.0
