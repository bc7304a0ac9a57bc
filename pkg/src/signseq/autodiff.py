"""Dense real-tensor engine with reverse-mode automatic differentiation.

Covers exactly what the sequence classifier needs: matmul (plain and
batched), elementwise ops, softmax / log-softmax, layer normalization,
inverted dropout, reductions, and masked mean pooling. Rank is capped at 3
(batch x rows x cols); multi-head attention is expressed with slice/concat
over the feature axis instead of rank-4 reshapes, which keeps every backward
rule a few lines of numpy.

Forward runs in float32 by default; gradient verification builds the same
graph in float64 (finite differences are too noisy in 32-bit). Ops record
onto the innermost active :class:`Graph` (a context manager); with no graph
active the same functions are plain numpy forward passes, which is what
eval-mode inference uses.
"""

from __future__ import annotations

import threading
from typing import Callable

import numpy as np

from .rng import CounterRng


class ShapeMismatch(ValueError):
    pass


class BadProbability(ValueError):
    pass


class NotScalar(ValueError):
    pass


class DetachedLoss(ValueError):
    pass


class EmptyMask(ValueError):
    pass


# Additive pre-softmax penalty for masked positions. Finite (keeps tensors
# finite-valued) yet large enough that exp underflows to exactly 0.0 after
# max-subtraction in either precision.
MASK_FILL = -1.0e9


class Tensor:
    """Immutable dense array of rank <= 3. Do not write to ``.data``."""

    __slots__ = ("data", "requires_grad")

    def __init__(self, values, requires_grad: bool = False, dtype=None):
        arr = np.asarray(values, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        if arr.ndim > 3:
            raise ShapeMismatch(f"rank {arr.ndim} > 3 not supported")
        self.data = arr
        self.requires_grad = bool(requires_grad)

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise NotScalar(f"size {self.data.size} tensor is not a scalar")
        return float(self.data.reshape(()))

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype.name}, requires_grad={self.requires_grad})"


class _Node:
    __slots__ = ("output", "backward_fn")

    def __init__(self, output: Tensor, backward_fn: Callable):
        self.output = output
        self.backward_fn = backward_fn  # grad_out -> list[(Tensor, grad array)]


_local = threading.local()


def _graph_stack() -> list:
    if not hasattr(_local, "stack"):
        _local.stack = []
    return _local.stack


class Graph:
    """Tape of executed ops, appended in execution (= topological) order."""

    def __init__(self):
        self.nodes: list[_Node] = []

    def __enter__(self) -> "Graph":
        _graph_stack().append(self)
        return self

    def __exit__(self, *exc):
        popped = _graph_stack().pop()
        assert popped is self
        return False


def _record(inputs, out_data, backward_fn) -> Tensor:
    requires = any(t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=requires)
    stack = _graph_stack()
    if stack and requires:
        stack[-1].nodes.append(_Node(out, backward_fn))
    return out


# ---------------------------------------------------------------------------
# elementwise and affine ops
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeMismatch(f"add {a.shape} vs {b.shape}")
    return _record((a, b), a.data + b.data, lambda g: [(a, g), (b, g)])


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """x[..., d] + b[d], the only broadcast form supported."""
    if b.data.ndim != 1 or x.shape[-1] != b.shape[0]:
        raise ShapeMismatch(f"add_bias {x.shape} vs {b.shape}")
    d = b.shape[0]

    def backward(g):
        return [(x, g), (b, g.reshape(-1, d).sum(axis=0))]

    return _record((x, b), x.data + b.data, backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeMismatch(f"mul {a.shape} vs {b.shape}")
    return _record((a, b), a.data * b.data,
                   lambda g: [(a, g * b.data), (b, g * a.data)])


def scale(x: Tensor, c: float) -> Tensor:
    return _record((x,), x.data * c, lambda g: [(x, g * c)])


def relu(x: Tensor) -> Tensor:
    keep = x.data > 0
    return _record((x,), np.where(keep, x.data, 0.0), lambda g: [(x, g * keep)])


# ---------------------------------------------------------------------------
# matmul family
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """(m,k)@(k,n), (B,m,k)@(k,n), or (B,m,k)@(B,k,n)."""
    an, bn = a.data.ndim, b.data.ndim
    if an == 2 and bn == 2:
        if a.shape[1] != b.shape[0]:
            raise ShapeMismatch(f"matmul {a.shape} @ {b.shape}")

        def backward(g):
            return [(a, g @ b.data.T), (b, a.data.T @ g)]
    elif an == 3 and bn == 2:
        if a.shape[2] != b.shape[0]:
            raise ShapeMismatch(f"matmul {a.shape} @ {b.shape}")

        def backward(g):
            return [(a, g @ b.data.T),
                    (b, np.tensordot(a.data, g, axes=([0, 1], [0, 1])))]
    elif an == 3 and bn == 3:
        if a.shape[0] != b.shape[0] or a.shape[2] != b.shape[1]:
            raise ShapeMismatch(f"matmul {a.shape} @ {b.shape}")

        def backward(g):
            return [(a, g @ b.data.transpose(0, 2, 1)),
                    (b, a.data.transpose(0, 2, 1) @ g)]
    else:
        raise ShapeMismatch(f"matmul ranks {an} @ {bn} not supported")
    return _record((a, b), a.data @ b.data, backward)


def transpose_last(x: Tensor) -> Tensor:
    if x.data.ndim < 2:
        raise ShapeMismatch("transpose_last needs rank >= 2")
    return _record((x,), np.swapaxes(x.data, -1, -2),
                   lambda g: [(x, np.swapaxes(g, -1, -2))])


def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    old = x.shape
    return _record((x,), x.data.reshape(shape), lambda g: [(x, g.reshape(old))])


def slice_last(x: Tensor, lo: int, hi: int) -> Tensor:
    if not (0 <= lo < hi <= x.shape[-1]):
        raise ShapeMismatch(f"slice [{lo}:{hi}] outside width {x.shape[-1]}")

    def backward(g):
        full = np.zeros_like(x.data)
        full[..., lo:hi] = g
        return [(x, full)]

    return _record((x,), x.data[..., lo:hi].copy(), backward)


def concat_last(parts: list[Tensor]) -> Tensor:
    if not parts:
        raise ShapeMismatch("concat of nothing")
    widths = [p.shape[-1] for p in parts]
    offs = np.cumsum([0] + widths)

    def backward(g):
        return [(p, g[..., offs[i]:offs[i + 1]]) for i, p in enumerate(parts)]

    return _record(tuple(parts), np.concatenate([p.data for p in parts], axis=-1), backward)


# ---------------------------------------------------------------------------
# normalization / activation with bespoke backward rules
# ---------------------------------------------------------------------------

def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis, max-subtracted for stability."""
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return [(x, y * (g - (g * y).sum(axis=-1, keepdims=True)))]

    return _record((x,), y, backward)


def log_softmax(x: Tensor) -> Tensor:
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    y = shifted - lse
    p = np.exp(y)

    def backward(g):
        return [(x, g - p * g.sum(axis=-1, keepdims=True))]

    return _record((x,), y, backward)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-row (last axis) normalization with population (1/d) variance."""
    d = x.shape[-1]
    if d < 2:
        raise ShapeMismatch("layer_norm needs width >= 2")
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeMismatch(f"layer_norm gain/bias must be ({d},)")
    mu = x.data.mean(axis=-1, keepdims=True)
    var = ((x.data - mu) ** 2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    y = xhat * gain.data + bias.data

    def backward(g):
        dxhat = g * gain.data
        dx = (dxhat - dxhat.mean(axis=-1, keepdims=True)
              - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)) * inv
        lead = (-1, d)
        return [(x, dx),
                (gain, (g * xhat).reshape(lead).sum(axis=0)),
                (bias, g.reshape(lead).sum(axis=0))]

    return _record((x, gain, bias), y, backward)


def dropout(x: Tensor, p: float, training: bool, rng: CounterRng) -> Tensor:
    """Inverted dropout: zero with probability p, survivors scaled by 1/(1-p)."""
    if p < 0.0 or p >= 1.0:
        raise BadProbability(f"dropout p={p} outside [0, 1)")
    if not training or p == 0.0:
        return x
    keep = (rng.uniform(x.shape) >= p) / (1.0 - p)
    keep = keep.astype(x.dtype)
    return _record((x,), x.data * keep, lambda g: [(x, g * keep)])


def mask_fill(x: Tensor, allowed: np.ndarray) -> Tensor:
    """Add MASK_FILL where ``allowed`` is False; softmax then yields exact zeros."""
    penalty = np.where(allowed, 0.0, MASK_FILL).astype(x.dtype)
    if penalty.shape != x.shape:
        raise ShapeMismatch(f"mask {penalty.shape} vs {x.shape}")
    return _record((x,), x.data + penalty, lambda g: [(x, g)])


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------

def sum_all(x: Tensor) -> Tensor:
    shape = x.shape
    return _record((x,), np.asarray(x.data.sum(), dtype=x.dtype),
                   lambda g: [(x, np.full(shape, g, dtype=g.dtype))])


def masked_mean_rows(x: Tensor, mask: np.ndarray) -> Tensor:
    """Mean of x[b, t, :] over the rows where mask[b, t] is True -> (B, d)."""
    if x.data.ndim != 3 or mask.shape != x.shape[:2]:
        raise ShapeMismatch(f"masked_mean_rows {x.shape} with mask {mask.shape}")
    counts = mask.sum(axis=1)
    if (counts == 0).any():
        raise EmptyMask("a clip has no attendable rows")
    m = mask.astype(x.dtype)
    out = (x.data * m[:, :, None]).sum(axis=1) / counts[:, None]

    def backward(g):
        return [(x, g[:, None, :] * m[:, :, None] / counts[:, None, None])]

    return _record((x,), out, backward)


# ---------------------------------------------------------------------------
# backward pass and the finite-difference oracle
# ---------------------------------------------------------------------------

def backward(loss: Tensor, graph: Graph) -> dict[Tensor, np.ndarray]:
    """Gradients of a scalar loss w.r.t. every requires_grad leaf in graph.

    Returns a map keyed by tensor identity: ``grads[param]``. Each recorded
    node is visited exactly once, in reverse recording order, so identical
    forward passes give bitwise-identical gradients.
    """
    if loss.data.size != 1:
        raise NotScalar(f"loss has {loss.data.size} elements")
    if not any(n.output is loss for n in graph.nodes):
        raise DetachedLoss("loss was not produced by ops recorded in this graph")
    grads: dict[Tensor, np.ndarray] = {loss: np.ones_like(loss.data)}
    for node in reversed(graph.nodes):
        g_out = grads.pop(node.output, None)
        if g_out is None:
            continue
        for tensor, g in node.backward_fn(g_out):
            if not tensor.requires_grad:
                continue
            if tensor in grads:
                grads[tensor] = grads[tensor] + g
            else:
                grads[tensor] = g
    return grads


def finite_diff_grad(f: Callable[[Tensor], float], x, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar f at x (Tensor or array).

    Independent of the tape: f is re-evaluated 2 * x.size times. Use float64
    inputs; 32-bit differences drown in rounding noise.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    base = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(base)
    flat = grad.reshape(-1)
    for i in range(base.size):
        bumped = base.copy().reshape(-1)
        bumped[i] += h
        hi = _eval_scalar(f, Tensor(bumped.reshape(base.shape), dtype=base.dtype))
        bumped[i] -= 2 * h
        lo = _eval_scalar(f, Tensor(bumped.reshape(base.shape), dtype=base.dtype))
        flat[i] = (hi - lo) / (2 * h)
    return grad


def _eval_scalar(f, x: Tensor) -> float:
    out = f(x)
    return out.item() if isinstance(out, Tensor) else float(out)
