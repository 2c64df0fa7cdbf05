"""Dense numpy-backed tensors with tape-based reverse-mode autodiff.

Every operation records a backward closure on its output; ``backward`` on a
scalar walks the recorded graph in reverse topological order and accumulates
gradients additively into every reachable input. The graph is rebuilt on each
forward pass and dropped afterwards, so one step never leaks state into the
next. Only first-order gradients are supported.

Values default to float64; training code passes float32 arrays for speed and
every op preserves the dtype of its inputs.
"""

from __future__ import annotations

import struct
from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import erf, expit

DEFAULT_DTYPE = np.float64

_INV_SQRT2 = float(1.0 / np.sqrt(2.0))
_INV_SQRT_2PI = float(1.0 / np.sqrt(2.0 * np.pi))

# Observers receive the shape of every op output; used by the scoring-path
# shape audit.
_alloc_observers: list[Callable[[tuple[int, ...]], None]] = []


@contextmanager
def observe_allocations():
    """Collect the shapes of all op outputs created inside the block."""
    shapes: list[tuple[int, ...]] = []
    _alloc_observers.append(shapes.append)
    try:
        yield shapes
    finally:
        _alloc_observers.remove(shapes.append)


class Tensor:
    """Dense real array plus reverse-mode gradient bookkeeping."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self) -> None:
        backward(self)

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype.name})"


def _tracked(t: Tensor) -> bool:
    return t.requires_grad or t._backward is not None


def _make(data: np.ndarray, parents: tuple[Tensor, ...],
          backward_fn: Callable[[np.ndarray], None]) -> Tensor:
    out = Tensor(data)
    if any(_tracked(p) for p in parents):
        out._parents = parents
        out._backward = backward_fn
    for notify in _alloc_observers:
        notify(tuple(np.shape(data)))
    return out


def backward(root: Tensor) -> None:
    """Reverse sweep from a scalar root; gradients accumulate additively."""
    if root.data.size != 1:
        raise ValueError(f"backward root must be scalar, got shape {root.shape}")
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    root._accumulate(np.ones_like(root.data))
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


def zero_grads(tensors: Iterable[Tensor]) -> None:
    for t in tensors:
        t.grad = None


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the original operand shape."""
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, d in enumerate(shape) if d == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def add(a: Tensor, b: Tensor) -> Tensor:
    na, nb = _tracked(a), _tracked(b)

    def bw(g: np.ndarray) -> None:
        if na:
            a._accumulate(_unbroadcast(g, a.data.shape))
        if nb:
            b._accumulate(_unbroadcast(g, b.data.shape))

    return _make(a.data + b.data, (a, b), bw)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product, broadcasting like numpy."""
    na, nb = _tracked(a), _tracked(b)

    def bw(g: np.ndarray) -> None:
        if na:
            a._accumulate(_unbroadcast(g * b.data, a.data.shape))
        if nb:
            b._accumulate(_unbroadcast(g * a.data, b.data.shape))

    return _make(a.data * b.data, (a, b), bw)


def scale(a: Tensor, s: float) -> Tensor:
    """Multiply by a python constant (not differentiated w.r.t. ``s``)."""

    def bw(g: np.ndarray) -> None:
        a._accumulate(g * s)

    return _make(a.data * s, (a,), bw)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError(f"matmul expects 2-D operands, got {a.shape} @ {b.shape}")
    if a.data.shape[1] != b.data.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    na, nb = _tracked(a), _tracked(b)

    def bw(g: np.ndarray) -> None:
        if na:
            a._accumulate(g @ b.data.T)
        if nb:
            b._accumulate(a.data.T @ g)

    return _make(a.data @ b.data, (a, b), bw)


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ValueError(f"transpose expects a matrix, got shape {a.shape}")

    def bw(g: np.ndarray) -> None:
        a._accumulate(g.T)

    return _make(a.data.T, (a,), bw)


def concat_rows(parts: Sequence[Tensor]) -> Tensor:
    return _concat(parts, axis=0)


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    return _concat(parts, axis=1)


def _concat(parts: Sequence[Tensor], axis: int) -> Tensor:
    parts = tuple(parts)
    if not parts:
        raise ValueError("concat of zero tensors")
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)
    tracked = [_tracked(p) for p in parts]

    def bw(g: np.ndarray) -> None:
        for p, need, lo, hi in zip(parts, tracked, offsets[:-1], offsets[1:]):
            if need:
                sl = g[lo:hi] if axis == 0 else g[:, lo:hi]
                p._accumulate(sl)

    return _make(np.concatenate([p.data for p in parts], axis=axis), parts, bw)


def sum_all(a: Tensor) -> Tensor:
    def bw(g: np.ndarray) -> None:
        a._accumulate(g)  # 0-d grad broadcasts over the input shape

    return _make(np.asarray(a.data.sum()), (a,), bw)


def mean_all(a: Tensor) -> Tensor:
    return scale(sum_all(a), 1.0 / a.data.size)


def embedding_rows(table: Tensor, ids) -> Tensor:
    """Gather rows of ``table``; backward scatter-adds into the table."""
    idx = np.asarray(ids, dtype=np.intp)
    if idx.ndim != 1:
        raise ValueError("embedding ids must be a 1-D sequence")
    if idx.size and (idx.min() < 0 or idx.max() >= table.data.shape[0]):
        raise IndexError(
            f"embedding id out of range: ids span [{idx.min()}, {idx.max()}] "
            f"for table of {table.data.shape[0]} rows")

    def bw(g: np.ndarray) -> None:
        if table.grad is None:
            table.grad = np.zeros_like(table.data)
        np.add.at(table.grad, idx, g)

    return _make(table.data[idx], (table,), bw)


def softmax_rows(a: Tensor) -> Tensor:
    """Row-wise softmax of a matrix, stabilized by max subtraction."""
    if a.data.ndim != 2:
        raise ValueError(f"softmax_rows expects a matrix, got shape {a.shape}")
    z = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=1, keepdims=True)

    def bw(g: np.ndarray) -> None:
        a._accumulate(s * (g - (g * s).sum(axis=1, keepdims=True)))

    return _make(s, (a,), bw)


def sigmoid(a: Tensor) -> Tensor:
    y = expit(a.data)

    def bw(g: np.ndarray) -> None:
        a._accumulate(g * y * (1.0 - y))

    return _make(y, (a,), bw)


def gelu(a: Tensor) -> Tensor:
    """x * Phi(x) with the exact Gaussian CDF."""
    x = a.data
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))

    def bw(g: np.ndarray) -> None:
        pdf = np.exp(-0.5 * x * x) * _INV_SQRT_2PI
        a._accumulate(g * (cdf + x * pdf))

    return _make(x * cdf, (a,), bw)


def layer_norm(a: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-12) -> Tensor:
    """Normalize over the last axis, then scale and shift per feature."""
    x = a.data
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    na, ng, nb = _tracked(a), _tracked(gain), _tracked(bias)
    lead = tuple(range(x.ndim - 1))

    def bw(g: np.ndarray) -> None:
        if nb:
            bias._accumulate(g.sum(axis=lead))
        if ng:
            gain._accumulate((g * xhat).sum(axis=lead))
        if na:
            gx = g * gain.data
            a._accumulate(inv * (gx - gx.mean(axis=-1, keepdims=True)
                                 - xhat * (gx * xhat).mean(axis=-1, keepdims=True)))

    return _make(xhat * gain.data + bias.data, (a, gain, bias), bw)


def dropout(a: Tensor, p: float, training: bool,
            rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout; identity when not training or p == 0."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return a
    if rng is None:
        raise ValueError("dropout in training mode needs an rng")
    keep = (rng.random(a.data.shape) >= p).astype(a.data.dtype)
    keep *= 1.0 / (1.0 - p)

    def bw(g: np.ndarray) -> None:
        a._accumulate(g * keep)

    return _make(a.data * keep, (a,), bw)


def bce_with_logits(logits: Tensor, targets) -> Tensor:
    """Mean binary cross entropy over all cells, in stable log-sum-exp form."""
    t = targets.data if isinstance(targets, Tensor) else np.asarray(targets)
    t = t.astype(logits.data.dtype, copy=False)
    if t.shape != logits.data.shape:
        raise ValueError(f"bce shape mismatch: logits {logits.shape} vs targets {t.shape}")
    if t.size and not np.all((t == 0.0) | (t == 1.0)):
        raise ValueError("bce targets must be 0 or 1")
    z = logits.data
    per_cell = np.maximum(z, 0.0) - z * t + np.logaddexp(0.0, -np.abs(z))
    count = z.size

    def bw(g: np.ndarray) -> None:
        logits._accumulate((expit(z) - t) * (float(g) / count))

    return _make(np.asarray(per_cell.mean()), (logits,), bw)


# Named-tensor serialization: little-endian header (name length, name, dtype
# tag, rank, dims) followed by the raw values. The checkpoint container in the
# trainer stacks these records.

_DTYPE_TAG = {np.dtype(np.float64): 0, np.dtype(np.float32): 1}
_TAG_DTYPE = {0: np.dtype("<f8"), 1: np.dtype("<f4")}


def write_named_array(fh, name: str, array: np.ndarray) -> None:
    tag = _DTYPE_TAG.get(array.dtype)
    if tag is None:
        raise ValueError(f"unsupported dtype {array.dtype} for tensor '{name}'")
    encoded = name.encode("utf-8")
    fh.write(struct.pack("<I", len(encoded)))
    fh.write(encoded)
    fh.write(struct.pack("<BB", tag, array.ndim))
    for dim in array.shape:
        fh.write(struct.pack("<I", dim))
    fh.write(np.ascontiguousarray(array, dtype=_TAG_DTYPE[tag]).tobytes())


def read_named_array(fh) -> tuple[str, np.ndarray]:
    name_len, = struct.unpack("<I", _read_exact(fh, 4))
    name = _read_exact(fh, name_len).decode("utf-8")
    tag, rank = struct.unpack("<BB", _read_exact(fh, 2))
    if tag not in _TAG_DTYPE:
        raise ValueError(f"unknown dtype tag {tag} for tensor '{name}'")
    dims = [struct.unpack("<I", _read_exact(fh, 4))[0] for _ in range(rank)]
    count = int(np.prod(dims)) if dims else 1
    raw = _read_exact(fh, count * _TAG_DTYPE[tag].itemsize)
    arr = np.frombuffer(raw, dtype=_TAG_DTYPE[tag]).reshape(dims).copy()
    return name, arr


def _read_exact(fh, n: int) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise ValueError("truncated tensor stream")
    return buf
