"""AdamW with decoupled weight decay, LR-style schedules, gradient clipping.

Parameters and gradients travel as ``dict[str, np.ndarray]`` keyed by
parameter name; a key present in ``params`` but absent from ``grads`` is
skipped entirely (no moment update, no decay), which is how frozen
parameter groups are expressed.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericalError, ShapeError

Params = dict[str, np.ndarray]


@dataclass
class AdamWState:
    """Per-parameter first/second moments plus shared step count."""

    m: Params = field(default_factory=dict)
    v: Params = field(default_factory=dict)
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0


def adamw_step(params: Params, grads: Params, state: AdamWState, lr: float) -> Params:
    """One AdamW update; decay is decoupled (applied to weights, not grads).

    Returns a new params dict; ``state`` is mutated in place. Any NaN/Inf
    gradient aborts the step before any parameter is touched.
    """
    for name, g in grads.items():
        if name not in params:
            raise ShapeError(f"adamw_step: gradient for unknown parameter '{name}'")
        if g.shape != params[name].shape:
            raise ShapeError(
                f"adamw_step: gradient shape {g.shape} != parameter shape "
                f"{params[name].shape} for '{name}'"
            )
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"adamw_step: non-finite gradient for '{name}'")

    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**state.t
    bc2 = 1.0 - b2**state.t
    out: Params = {}
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            out[name] = p
            continue
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        state.m[name] = m
        state.v[name] = v
        m_hat = m / bc1
        v_hat = v / bc2
        p = p * (1.0 - lr * state.weight_decay)
        out[name] = p - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return out


_KINDS = ("constant", "cosine", "warmup-cosine")


@dataclass(frozen=True)
class Schedule:
    """Scalar-valued training schedule evaluated per optimizer step.

    constant:       value = start everywhere.
    cosine:         start -> final, v(t) = final + (start-final)(1+cos(pi t/T))/2.
    warmup-cosine:  linear 0 -> peak over warmup_steps, then cosine peak -> final.
    """

    kind: str
    start: float = 0.0
    peak: float = 0.0
    final: float = 0.0
    warmup_steps: int = 0
    total_steps: int = 1

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ConfigError(f"Schedule: unknown kind '{self.kind}'")
        if self.total_steps <= 0:
            raise ConfigError("Schedule: total_steps must be positive")
        if not 0 <= self.warmup_steps <= self.total_steps:
            raise ConfigError("Schedule: warmup_steps must lie in [0, total_steps]")


def schedule_value(s: Schedule, step: int) -> float:
    """Evaluate ``s`` at ``step``; out-of-range steps clamp with a warning."""
    if step < 0 or step > s.total_steps:
        warnings.warn(
            f"schedule_value: step {step} outside [0, {s.total_steps}], clamping",
            stacklevel=2,
        )
        step = min(max(step, 0), s.total_steps)
    if s.kind == "constant":
        return s.start
    if s.kind == "cosine":
        # endpoints returned literally so they are exact, not within roundoff
        if step == 0:
            return s.start
        if step == s.total_steps:
            return s.final
        frac = step / s.total_steps
        return s.final + 0.5 * (s.start - s.final) * (1.0 + math.cos(math.pi * frac))
    # warmup-cosine
    if step < s.warmup_steps:
        return s.peak * step / s.warmup_steps
    if step == s.warmup_steps:
        return s.peak
    if step == s.total_steps:
        return s.final
    span = s.total_steps - s.warmup_steps
    frac = (step - s.warmup_steps) / span
    return s.final + 0.5 * (s.peak - s.final) * (1.0 + math.cos(math.pi * frac))


def clip_global_norm(grads: Params, max_norm: float) -> tuple[Params, float]:
    """Scale all gradients so their joint L2 norm is at most ``max_norm``.

    Returns (possibly scaled grads, pre-clip global norm). A norm at or
    below the threshold leaves the gradients untouched.
    """
    if max_norm < 0:
        raise ConfigError(f"clip_global_norm: max_norm must be >= 0, got {max_norm}")
    sq = 0.0
    # accumulate in name order so the norm is independent of dict layout
    for name in sorted(grads):
        g = grads[name]
        sq += float((g * g).sum())
    norm = math.sqrt(sq)
    if norm <= max_norm or norm == 0.0:
        return grads, norm
    scale = max_norm / norm
    return {k: g * scale for k, g in grads.items()}, norm
