"""Minimal reverse-mode automatic differentiation over numpy buffers.

Values are f32 by default (f64 is supported so finite-difference oracles can
evaluate forward passes at full precision). Operations record onto the active
Tape; running with no active tape is the no-grad inference path. Explicit
reductions (scalar sum, the logsumexp inside log-softmax) accumulate in f64
regardless of the value dtype.

Broadcasting is deliberately restricted: a python scalar against any shape,
or two identical shapes. Everything the model needs fits in that contract and
gradient code stays checkable.
"""

from __future__ import annotations

import threading

import numpy as np


class ShapeMismatch(ValueError):
    pass


class IndexOutOfRange(IndexError):
    pass


class NotScalar(ValueError):
    pass


class DetachedFromTape(RuntimeError):
    pass


class MissingGrad(RuntimeError):
    pass


class Tensor:
    """An n-dimensional float array, optionally tracked on a gradient tape."""

    __slots__ = ("data", "grad", "requires_grad", "tape_id")

    def __init__(self, data, requires_grad: bool = False, dtype=np.float32):
        self.data = np.ascontiguousarray(data, dtype=dtype)
        self.grad = None
        self.requires_grad = requires_grad
        self.tape_id = None  # index of the node that produced this tensor

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise NotScalar(f"item() on shape {self.shape}")
        return float(self.data.reshape(()))

    def accumulate_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"


class _Node:
    __slots__ = ("out", "inputs", "backward_fn")

    def __init__(self, out: Tensor, inputs: tuple[Tensor, ...], backward_fn):
        self.out = out
        self.inputs = inputs
        self.backward_fn = backward_fn


_ACTIVE = threading.local()


def _current_tape():
    return getattr(_ACTIVE, "tape", None)


class Tape:
    """Append-only op log; inputs always precede the node that uses them."""

    def __init__(self):
        self.nodes: list[_Node] = []

    def __enter__(self):
        if _current_tape() is not None:
            raise RuntimeError("a tape is already active in this thread")
        _ACTIVE.tape = self
        return self

    def __exit__(self, *exc):
        _ACTIVE.tape = None
        return False

    def record(self, out: Tensor, inputs: tuple[Tensor, ...], backward_fn) -> Tensor:
        out.tape_id = len(self.nodes)
        self.nodes.append(_Node(out, inputs, backward_fn))
        return out


def _record(out: Tensor, inputs, backward_fn) -> Tensor:
    tape = _current_tape()
    if tape is not None and any(t.requires_grad or t.tape_id is not None for t in inputs):
        out.requires_grad = True
        tape.record(out, tuple(inputs), backward_fn)
    return out


def _check_same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeMismatch(f"{op}: {a.shape} vs {b.shape}")
    if a.data.dtype != b.data.dtype:
        raise ShapeMismatch(f"{op}: dtype {a.data.dtype} vs {b.data.dtype}")


def constant(data, dtype=np.float32) -> Tensor:
    return Tensor(data, requires_grad=False, dtype=dtype)


def parameter(data, dtype=np.float32) -> Tensor:
    return Tensor(data, requires_grad=True, dtype=dtype)


# ---------------------------------------------------------------------------
# primitives


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeMismatch(f"matmul expects 2-d operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    out = Tensor(a.data @ b.data, dtype=a.data.dtype)

    def backward(g):
        if a.requires_grad or a.tape_id is not None:
            a.accumulate_grad(g @ b.data.T)
        if b.requires_grad or b.tape_id is not None:
            b.accumulate_grad(a.data.T @ g)

    return _record(out, (a, b), backward)


def bmm(a: Tensor, b: Tensor) -> Tensor:
    """Batched matmul: [B,m,k] @ [B,k,n] -> [B,m,n]."""
    if a.data.ndim != 3 or b.data.ndim != 3:
        raise ShapeMismatch(f"bmm expects 3-d operands, got {a.shape} @ {b.shape}")
    if a.shape[0] != b.shape[0] or a.shape[2] != b.shape[1]:
        raise ShapeMismatch(f"bmm shapes incompatible: {a.shape} @ {b.shape}")
    out = Tensor(np.matmul(a.data, b.data), dtype=a.data.dtype)

    def backward(g):
        if a.requires_grad or a.tape_id is not None:
            a.accumulate_grad(np.matmul(g, b.data.swapaxes(1, 2)))
        if b.requires_grad or b.tape_id is not None:
            b.accumulate_grad(np.matmul(a.data.swapaxes(1, 2), g))

    return _record(out, (a, b), backward)


def add(a: Tensor, b) -> Tensor:
    if isinstance(b, (int, float)):
        out = Tensor(a.data + a.data.dtype.type(b), dtype=a.data.dtype)

        def backward(g):
            a.accumulate_grad(g)

        return _record(out, (a,), backward)
    _check_same_shape(a, b, "add")
    out = Tensor(a.data + b.data, dtype=a.data.dtype)

    def backward(g):
        if a.requires_grad or a.tape_id is not None:
            a.accumulate_grad(g)
        if b.requires_grad or b.tape_id is not None:
            b.accumulate_grad(g)

    return _record(out, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "sub")
    out = Tensor(a.data - b.data, dtype=a.data.dtype)

    def backward(g):
        if a.requires_grad or a.tape_id is not None:
            a.accumulate_grad(g)
        if b.requires_grad or b.tape_id is not None:
            b.accumulate_grad(-g)

    return _record(out, (a, b), backward)


def mul(a: Tensor, b) -> Tensor:
    if isinstance(b, (int, float)):
        s = a.data.dtype.type(b)
        out = Tensor(a.data * s, dtype=a.data.dtype)

        def backward(g):
            a.accumulate_grad(g * s)

        return _record(out, (a,), backward)
    _check_same_shape(a, b, "mul")
    out = Tensor(a.data * b.data, dtype=a.data.dtype)

    def backward(g):
        if a.requires_grad or a.tape_id is not None:
            a.accumulate_grad(g * b.data)
        if b.requires_grad or b.tape_id is not None:
            b.accumulate_grad(g * a.data)

    return _record(out, (a, b), backward)


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """[B,N] + [N]: the one sanctioned broadcast beyond python scalars."""
    if x.data.ndim != 2 or b.data.ndim != 1 or x.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"add_bias: {x.shape} + {b.shape}")
    if x.data.dtype != b.data.dtype:
        raise ShapeMismatch(f"add_bias dtype: {x.data.dtype} vs {b.data.dtype}")
    out = Tensor(x.data + b.data[None, :], dtype=x.data.dtype)

    def backward(g):
        if x.requires_grad or x.tape_id is not None:
            x.accumulate_grad(g)
        if b.requires_grad or b.tape_id is not None:
            b.accumulate_grad(g.sum(axis=0))

    return _record(out, (x, b), backward)


def sigmoid(x: Tensor) -> Tensor:
    # stable both directions: exponent argument is never positive
    d = x.data
    t = np.exp(-np.abs(d))
    y = np.where(d >= 0, 1.0 / (1.0 + t), t / (1.0 + t))
    out = Tensor(y, dtype=d.dtype)

    def backward(g):
        x.accumulate_grad(g * out.data * (1.0 - out.data))

    return _record(out, (x,), backward)


def tanh(x: Tensor) -> Tensor:
    out = Tensor(np.tanh(x.data), dtype=x.data.dtype)

    def backward(g):
        x.accumulate_grad(g * (1.0 - out.data * out.data))

    return _record(out, (x,), backward)


def _softmax_data(d: np.ndarray) -> np.ndarray:
    shifted = d - d.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return (e / e.sum(axis=1, keepdims=True)).astype(d.dtype)


def softmax_rows(x: Tensor) -> Tensor:
    if x.data.ndim != 2:
        raise ShapeMismatch(f"softmax_rows expects 2-d input, got {x.shape}")
    out = Tensor(_softmax_data(x.data), dtype=x.data.dtype)

    def backward(g):
        y = out.data
        dot = (g * y).sum(axis=1, keepdims=True)
        x.accumulate_grad(y * (g - dot))

    return _record(out, (x,), backward)


def log_softmax_rows(x: Tensor) -> Tensor:
    if x.data.ndim != 2:
        raise ShapeMismatch(f"log_softmax_rows expects 2-d input, got {x.shape}")
    d = x.data
    m = d.max(axis=1, keepdims=True)
    shifted = (d - m).astype(np.float64)
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))  # f64 accumulation
    out = Tensor((shifted - lse).astype(d.dtype), dtype=d.dtype)

    def backward(g):
        soft = np.exp(out.data)
        x.accumulate_grad(g - soft * g.sum(axis=1, keepdims=True))

    return _record(out, (x,), backward)


def embedding_lookup(table: Tensor, ids) -> Tensor:
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexOutOfRange(f"id outside [0, {table.shape[0]})")
    out = Tensor(table.data[ids], dtype=table.data.dtype)

    def backward(g):
        if table.grad is None:
            table.grad = np.zeros_like(table.data)
        np.add.at(table.grad, ids, g)  # repeated ids accumulate

    return _record(out, (table,), backward)


def dropout(x: Tensor, p: float, training: bool, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout: scales survivors by 1/(1-p) so inference is identity."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability {p} outside [0, 1)")
    if not training or p == 0.0:
        return x
    if rng is None:
        raise ValueError("training-mode dropout needs an rng")
    mask = (rng.random(x.shape) >= p).astype(x.data.dtype) / x.data.dtype.type(1.0 - p)
    out = Tensor(x.data * mask, dtype=x.data.dtype)

    def backward(g):
        x.accumulate_grad(g * mask)

    return _record(out, (x,), backward)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ShapeMismatch("concat of zero tensors")
    dtype = tensors[0].data.dtype
    for t in tensors[1:]:
        if t.data.dtype != dtype:
            raise ShapeMismatch("concat dtype mismatch")
    try:
        out = Tensor(np.concatenate([t.data for t in tensors], axis=axis), dtype=dtype)
    except ValueError as e:
        raise ShapeMismatch(str(e)) from e
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad or t.tape_id is not None:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                t.accumulate_grad(g[tuple(idx)])

    return _record(out, tuple(tensors), backward)


def slice_axis(x: Tensor, start: int, stop: int, axis: int = 0) -> Tensor:
    if axis >= x.data.ndim:
        raise ShapeMismatch(f"axis {axis} out of range for shape {x.shape}")
    if not (0 <= start <= stop <= x.shape[axis]):
        raise ShapeMismatch(f"slice [{start}:{stop}] out of range on axis {axis} of {x.shape}")
    idx = [slice(None)] * x.data.ndim
    idx[axis] = slice(start, stop)
    idx = tuple(idx)
    out = Tensor(x.data[idx], dtype=x.data.dtype)

    def backward(g):
        full = np.zeros_like(x.data)
        full[idx] = g
        x.accumulate_grad(full)

    return _record(out, (x,), backward)


def transpose(x: Tensor) -> Tensor:
    if x.data.ndim != 2:
        raise ShapeMismatch(f"transpose expects 2-d input, got {x.shape}")
    out = Tensor(x.data.T, dtype=x.data.dtype)

    def backward(g):
        x.accumulate_grad(g.T)

    return _record(out, (x,), backward)


def reshape(x: Tensor, shape) -> Tensor:
    out = Tensor(x.data.reshape(shape), dtype=x.data.dtype)

    def backward(g):
        x.accumulate_grad(g.reshape(x.shape))

    return _record(out, (x,), backward)


def sum_all(x: Tensor) -> Tensor:
    """Full reduction to a scalar; accumulates in f64."""
    total = x.data.sum(dtype=np.float64)
    out = Tensor(np.asarray(total), dtype=x.data.dtype)

    def backward(g):
        x.accumulate_grad(np.full_like(x.data, x.data.dtype.type(g)))

    return _record(out, (x,), backward)


# ---------------------------------------------------------------------------
# reverse sweep and the optimizer step


def backward(loss: Tensor) -> None:
    """Populate grads of every requires_grad tensor reachable from `loss`."""
    if loss.data.size != 1:
        raise NotScalar(f"backward from non-scalar shape {loss.shape}")
    tape = _current_tape()
    if tape is None or loss.tape_id is None or loss.tape_id >= len(tape.nodes) or tape.nodes[loss.tape_id].out is not loss:
        raise DetachedFromTape("loss tensor was not produced on the active tape")
    loss.grad = np.ones_like(loss.data)
    # exact reverse order; each node visited once, fan-out accumulates via +=
    for node in reversed(tape.nodes[: loss.tape_id + 1]):
        if node.out.grad is None:
            continue
        node.backward_fn(node.out.grad)


def global_grad_norm(params) -> float:
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float(np.sum(p.grad.astype(np.float64) ** 2))
    return float(np.sqrt(total))


def sgd_step(params, lr: float, clip_norm: float | None = None) -> None:
    """p <- p - lr * g for each param, then zero the grads."""
    params = list(params)
    for p in params:
        if p.grad is None:
            raise MissingGrad(f"parameter {p!r} has no gradient")
    scale = 1.0
    if clip_norm is not None:
        norm = global_grad_norm(params)
        if norm > clip_norm:
            scale = clip_norm / norm
    for p in params:
        p.data -= np.asarray(lr * scale * p.grad, dtype=p.data.dtype)
        p.zero_grad()
