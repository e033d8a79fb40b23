"""Reverse-mode automatic differentiation over a small dense-tensor op set.

A ``Tensor`` wraps a float64 numpy array. While a ``Tape`` is active
(``with Tape() as tape:``), every differentiable op whose inputs touch the
gradient path appends one node to the tape, in execution order, so the
record is topologically sorted by construction. ``backward(tape, root)``
walks the record once in reverse and accumulates gradients into the
``.grad`` of every leaf created with ``requires_grad=True``.

One tape belongs to one logical execution context; the active tape lives
in a ``contextvars.ContextVar`` so concurrent contexts do not share state.
Tensors are immutable apart from ``.grad``.
"""

from __future__ import annotations

import contextvars
import math
from typing import Callable, Sequence

import numpy as np
from scipy.special import erf

from .errors import GraphError, NumericalError, ShapeError

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

# Toggled off only in tight benchmarks; every forward op verifies its
# output is finite so NaN poisoning is caught at the op that produced it.
CHECK_FINITE = True

_active_tape: contextvars.ContextVar["Tape | None"] = contextvars.ContextVar(
    "porc_active_tape", default=None
)


def _check_finite(name: str, data: np.ndarray) -> None:
    if CHECK_FINITE and not np.all(np.isfinite(data)):
        raise NumericalError(f"{name}: produced non-finite values")


class Tensor:
    """Immutable float64 array with an optional gradient slot."""

    __slots__ = ("data", "requires_grad", "grad", "_node", "zero_norm_rows")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        arr.setflags(write=False)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._node: "_Node | None" = None
        self.zero_norm_rows: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def _on_grad_path(self) -> bool:
        return self.requires_grad or self._node is not None

    def zero_grad(self) -> None:
        self.grad = None

    # ergonomic operator forms; all routing through the module-level ops
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return mul(_as_tensor(other), self)

    def __matmul__(self, other):
        return matmul(self, _as_tensor(other))

    def __neg__(self):
        return neg(self)

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class _Node:
    """One executed op: output + closures producing input gradients."""

    __slots__ = ("op", "inputs", "out", "backward_fn")

    def __init__(
        self,
        op: str,
        inputs: Sequence[Tensor],
        out: Tensor,
        backward_fn: Callable[[np.ndarray], Sequence[np.ndarray | None]],
    ):
        self.op = op
        self.inputs = tuple(inputs)
        self.out = out
        self.backward_fn = backward_fn


class Tape:
    """Ordered record of differentiable ops for one execution context."""

    def __init__(self):
        self.nodes: list[_Node] = []
        self._token = None

    def __enter__(self) -> "Tape":
        if _active_tape.get() is not None:
            raise GraphError("a Tape is already active in this context")
        self._token = _active_tape.set(self)
        return self

    def __exit__(self, *exc) -> None:
        _active_tape.reset(self._token)
        self._token = None

    def __len__(self) -> int:
        return len(self.nodes)


def _record(
    op: str,
    inputs: Sequence[Tensor],
    out_data: np.ndarray,
    backward_fn: Callable[[np.ndarray], Sequence[np.ndarray | None]],
) -> Tensor:
    _check_finite(op, out_data)
    out = Tensor(out_data)
    tape = _active_tape.get()
    if tape is not None and any(t._on_grad_path() for t in inputs):
        node = _Node(op, inputs, out, backward_fn)
        out._node = node
        tape.nodes.append(node)
    return out


def backward(tape: Tape, root: Tensor) -> None:
    """Accumulate d(root)/d(leaf) into every requires_grad leaf.

    The tape is replayed once in reverse execution order, which is a valid
    topological order, so each node is visited exactly once. Repeated calls
    without zeroing grads accumulate (sum of the two roots' gradients).
    """
    if root.ndim != 0:
        raise GraphError(f"backward root must be scalar, got shape {root.shape}")
    if not tape.nodes:
        raise GraphError("backward on an empty tape")
    if root._node is None or root._node not in tape.nodes:
        raise GraphError("backward root was not recorded on this tape")

    adjoint: dict[int, np.ndarray] = {id(root): np.ones((), dtype=np.float64)}
    for node in reversed(tape.nodes):
        g = adjoint.pop(id(node.out), None)
        if g is None:
            continue
        grads = node.backward_fn(g)
        for inp, grad in zip(node.inputs, grads):
            if grad is None:
                continue
            if inp.requires_grad:
                if inp.grad is None:
                    inp.grad = np.zeros(inp.shape, dtype=np.float64)
                inp.grad = inp.grad + grad
            if inp._node is not None:
                key = id(inp)
                if key in adjoint:
                    adjoint[key] = adjoint[key] + grad
                else:
                    adjoint[key] = grad


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# ---------------------------------------------------------------- primitives


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} x {b.shape}")
    out = a.data @ b.data

    def bw(g):
        return g @ b.data.T, a.data.T @ g

    return _record("matmul", (a, b), out, bw)


def _broadcast_binary(op: str, a: Tensor, b: Tensor, fwd, dfa, dfb) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        out = fwd(a.data, b.data)
    except ValueError as e:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from e

    def bw(g):
        return (
            _unbroadcast(dfa(g), a.shape),
            _unbroadcast(dfb(g), b.shape),
        )

    return _record(op, (a, b), out, bw)


def add(a: Tensor, b: Tensor) -> Tensor:
    return _broadcast_binary("add", a, b, np.add, lambda g: g, lambda g: g)


def sub(a: Tensor, b: Tensor) -> Tensor:
    return _broadcast_binary("sub", a, b, np.subtract, lambda g: g, lambda g: -g)


def mul(a: Tensor, b: Tensor) -> Tensor:
    return _broadcast_binary(
        "mul", a, b, np.multiply, lambda g: g * b.data, lambda g: g * a.data
    )


def neg(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    return _record("neg", (a,), -a.data, lambda g: (-g,))


def tanh(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    out = np.tanh(a.data)
    return _record("tanh", (a,), out, lambda g: (g * (1.0 - out * out),))


def gelu(a: Tensor) -> Tensor:
    """Exact (erf-form) GELU: x * Phi(x)."""
    a = _as_tensor(a)
    x = a.data
    phi = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    out = x * phi
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return _record("gelu", (a,), out, lambda g: (g * (phi + x * pdf),))


def log(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    if np.any(a.data <= 0.0):
        raise NumericalError("log: domain requires strictly positive inputs")
    out = np.log(a.data)
    return _record("log", (a,), out, lambda g: (g / a.data,))


def sqrt(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    if np.any(a.data < 0.0):
        raise NumericalError("sqrt: domain requires non-negative inputs")
    out = np.sqrt(a.data)
    return _record("sqrt", (a,), out, lambda g: (g * 0.5 / out,))


def clip_min(a: Tensor, floor: float) -> Tensor:
    """Elementwise max(a, floor); gradient passes only where a > floor."""
    a = _as_tensor(a)
    out = np.maximum(a.data, floor)
    gate = (a.data > floor).astype(np.float64)
    return _record("clip_min", (a,), out, lambda g: (g * gate,))


def _rows_2d(x: np.ndarray) -> np.ndarray:
    return x.reshape(1, -1) if x.ndim == 1 else x


def softmax(a: Tensor, temperature: float = 1.0) -> Tensor:
    """Row-wise softmax of a/temperature along the last axis."""
    a = _as_tensor(a)
    if temperature <= 0.0:
        raise NumericalError(f"softmax: temperature must be positive, got {temperature}")
    z = a.data / temperature
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        dot = (g * out).sum(axis=-1, keepdims=True)
        return (out * (g - dot) / temperature,)

    return _record("softmax", (a,), out, bw)


def log_softmax(a: Tensor, temperature: float = 1.0) -> Tensor:
    a = _as_tensor(a)
    if temperature <= 0.0:
        raise NumericalError(
            f"log_softmax: temperature must be positive, got {temperature}"
        )
    z = a.data / temperature
    z = z - z.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    out = z - lse
    s = np.exp(out)

    def bw(g):
        return ((g - s * g.sum(axis=-1, keepdims=True)) / temperature,)

    return _record("log_softmax", (a,), out, bw)


def layer_norm(a: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance (no affine)."""
    a = _as_tensor(a)
    x = a.data
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    sigma = np.sqrt(var + eps)
    out = (x - mu) / sigma
    n = x.shape[-1]

    def bw(g):
        gm = g.mean(axis=-1, keepdims=True)
        gy = (g * out).mean(axis=-1, keepdims=True)
        return ((g - gm - out * gy) / sigma,)

    # n == 1 normalizes to exactly zero; still differentiable, grads vanish
    del n
    return _record("layer_norm", (a,), out, bw)


def l2_normalize(a: Tensor) -> Tensor:
    """Scale rows (last axis) to unit L2 norm; zero rows stay zero, flagged."""
    a = _as_tensor(a)
    x = a.data
    norms = np.sqrt((x * x).sum(axis=-1, keepdims=True))
    zero = norms == 0.0
    safe = np.where(zero, 1.0, norms)
    out = x / safe

    def bw(g):
        dot = (g * out).sum(axis=-1, keepdims=True)
        grad = (g - out * dot) / safe
        return (np.where(zero, 0.0, grad),)

    result = _record("l2_normalize", (a,), out, bw)
    if np.any(zero):
        result.zero_norm_rows = np.nonzero(zero.reshape(zero.shape[:-1] or (1,)))[0]
    return result


def tsum(a: Tensor, axis: int | None = None) -> Tensor:
    a = _as_tensor(a)
    out = a.data.sum(axis=axis)

    def bw(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)

    return _record("sum", (a,), out, bw)


def tmean(a: Tensor, axis: int | None = None) -> Tensor:
    a = _as_tensor(a)
    out = a.data.mean(axis=axis)
    count = a.data.size if axis is None else a.shape[axis]

    def bw(g):
        if axis is None:
            return (np.broadcast_to(g / count, a.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis) / count, a.shape).copy(),)

    return _record("mean", (a,), out, bw)


def mask_select(a: Tensor, mask) -> Tensor:
    """Keep the rows (axis 0) where mask is True; gradient scatters back."""
    a = _as_tensor(a)
    m = np.asarray(mask, dtype=bool)
    if m.ndim != 1 or m.shape[0] != a.shape[0]:
        raise ShapeError(
            f"mask_select: mask shape {m.shape} does not index axis 0 of {a.shape}"
        )
    out = a.data[m]

    def bw(g):
        full = np.zeros(a.shape, dtype=np.float64)
        full[m] = g
        return (full,)

    return _record("mask_select", (a,), out, bw)


def take_rows(a: Tensor, indices) -> Tensor:
    """Gather rows by integer index (duplicates allowed); grads scatter-add."""
    a = _as_tensor(a)
    idx = np.asarray(indices, dtype=np.intp)
    if idx.ndim != 1:
        raise ShapeError(f"take_rows: indices must be 1-D, got shape {idx.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= a.shape[0]):
        raise ShapeError(f"take_rows: index out of range for axis 0 of {a.shape}")
    out = a.data[idx]

    def bw(g):
        full = np.zeros(a.shape, dtype=np.float64)
        np.add.at(full, idx, g)
        return (full,)

    return _record("take_rows", (a,), out, bw)


def concat_rows(tensors: Sequence[Tensor]) -> Tensor:
    """Stack 1-D tensors / concatenate 2-D tensors along axis 0."""
    if not tensors:
        raise ShapeError("concat_rows: need at least one tensor")
    tensors = [_as_tensor(t) for t in tensors]
    parts = [t.data.reshape(1, -1) if t.ndim == 1 else t.data for t in tensors]
    width = parts[0].shape[1]
    if any(p.ndim != 2 or p.shape[1] != width for p in parts):
        raise ShapeError(
            f"concat_rows: row widths differ: {[p.shape for p in parts]}"
        )
    out = np.concatenate(parts, axis=0)
    sizes = [p.shape[0] for p in parts]

    def bw(g):
        grads = []
        start = 0
        for t, n in zip(tensors, sizes):
            piece = g[start : start + n]
            grads.append(piece.reshape(t.shape))
            start += n
        return grads

    return _record("concat_rows", tuple(tensors), out, bw)


def transpose(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    if a.ndim != 2:
        raise ShapeError(f"transpose: expected 2-D, got shape {a.shape}")
    return _record("transpose", (a,), a.data.T.copy(), lambda g: (g.T,))


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    a = _as_tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError as e:
        raise ShapeError(f"reshape: cannot view {a.shape} as {shape}") from e
    return _record("reshape", (a,), out.copy(), lambda g: (g.reshape(a.shape),))
