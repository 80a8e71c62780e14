"""Dense float64 tensors with reverse-mode differentiation.

Deliberately minimal: only the operations the set encoder, LSTM decoder and
their losses need (matmul, broadcast arithmetic, pointwise nonlinearities,
reductions, column slice/concat, row gather, segmented max). Gradients are
accumulated into ``Tensor.grad`` buffers by :meth:`Tensor.backward`; callers
reset buffers between steps via :func:`zero_grads`.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .errors import EmptySetError


class Tensor:
    """A numpy float64 array plus an optional gradient buffer.

    Graph edges are recorded on the output tensor as ``(_parents,
    _backward)``; ``_backward`` receives the output gradient and accumulates
    into the parents' ``grad`` buffers.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() on tensor of size {self.data.size}")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self) -> None:
        """Reverse-mode pass from a scalar; accumulates into ``grad`` buffers."""
        if self.data.size != 1:
            raise ValueError(
                f"backward() requires a scalar loss, got shape {self.data.shape}"
            )
        # Iterative topological sort (training graphs can be long chains).
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self._accumulate(np.ones_like(self.data))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # Operator sugar; non-Tensor operands become constants.
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        return reshape(self, shape)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient back down to ``shape`` after numpy broadcasting."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.data.shape))

    return _make(out, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data - b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g, b.data.shape))

    return _make(out, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.data.shape))

    return _make(out, (a, b), backward)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError(
            f"matmul expects 2-D operands, got {a.data.shape} @ {b.data.shape}"
        )
    if a.data.shape[1] != b.data.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.data.shape} @ {b.data.shape}")
    out = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(g @ b.data.T)
        if b.requires_grad:
            b._accumulate(a.data.T @ g)

    return _make(out, (a, b), backward)


def power(a, exponent: float) -> Tensor:
    a = as_tensor(a)
    out = a.data ** exponent

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * exponent * a.data ** (exponent - 1.0))

    return _make(out, (a,), backward)


def relu(a) -> Tensor:
    a = as_tensor(a)
    out = np.maximum(a.data, 0.0)

    def backward(g):
        if a.requires_grad:
            # Subgradient 0 at exactly 0.
            a._accumulate(g * (a.data > 0.0))

    return _make(out, (a,), backward)


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(over="ignore"):  # exp overflow saturates correctly to 0
        out = 1.0 / (1.0 + np.exp(-a.data))

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * out * (1.0 - out))

    return _make(out, (a,), backward)


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * (1.0 - out * out))

    return _make(out, (a,), backward)


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if not a.requires_grad:
            return
        if axis is None:
            a._accumulate(np.broadcast_to(g, a.data.shape).copy())
        else:
            ge = g if keepdims else np.expand_dims(g, axis)
            a._accumulate(np.broadcast_to(ge, a.data.shape).copy())

    return _make(out, (a,), backward)


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    n = a.data.size if axis is None else a.data.shape[axis]
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    out = a.data.reshape(shape)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g.reshape(a.data.shape))

    return _make(out, (a,), backward)


def concat_cols(a, b) -> Tensor:
    """Concatenate two matrices along columns: [M,P] ++ [M,Q] -> [M,P+Q]."""
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[0] != b.data.shape[0]:
        raise ValueError(f"concat_cols shape mismatch: {a.data.shape}, {b.data.shape}")
    split = a.data.shape[1]
    out = np.concatenate([a.data, b.data], axis=1)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g[:, :split])
        if b.requires_grad:
            b._accumulate(g[:, split:])

    return _make(out, (a, b), backward)


def slice_cols(a, start: int, stop: int) -> Tensor:
    a = as_tensor(a)
    if a.data.ndim != 2:
        raise ValueError("slice_cols expects a matrix")
    out = a.data[:, start:stop].copy()

    def backward(g):
        if a.requires_grad:
            ga = np.zeros_like(a.data)
            ga[:, start:stop] = g
            a._accumulate(ga)

    return _make(out, (a,), backward)


def gather_rows(a, index: np.ndarray) -> Tensor:
    """Select rows by index (with repetition): out[i] = a[index[i]]."""
    a = as_tensor(a)
    index = np.asarray(index, dtype=np.intp)
    out = a.data[index]

    def backward(g):
        if a.requires_grad:
            ga = np.zeros_like(a.data)
            np.add.at(ga, index, g)
            a._accumulate(ga)

    return _make(out, (a,), backward)


def segment_max(a, segments: Iterable[tuple[int, int]]) -> tuple[Tensor, np.ndarray]:
    """Per-segment columnwise max over rows of a matrix.

    ``segments`` is a sequence of half-open row ranges ``(start, stop)``; the
    result is one row per segment, with ``argmax[b, d]`` the absolute row
    index attaining the max (first occurrence on ties, which is where the
    gradient is routed).
    """
    a = as_tensor(a)
    if a.data.ndim != 2:
        raise ValueError("segment_max expects a matrix")
    segs = list(segments)
    ncols = a.data.shape[1]
    out = np.empty((len(segs), ncols), dtype=np.float64)
    argmax = np.empty((len(segs), ncols), dtype=np.intp)
    for b, (start, stop) in enumerate(segs):
        if stop <= start:
            raise EmptySetError(f"segment {b} is empty: [{start}, {stop})")
        block = a.data[start:stop]
        local = block.argmax(axis=0)
        argmax[b] = local + start
        out[b] = block[local, np.arange(ncols)]

    def backward(g):
        if a.requires_grad:
            ga = np.zeros_like(a.data)
            cols = np.broadcast_to(np.arange(ncols), argmax.shape)
            np.add.at(ga, (argmax.ravel(), cols.ravel()), g.ravel())
            a._accumulate(ga)

    return _make(out, (a,), backward), argmax


def max_pool_set(a, mask: np.ndarray | None = None) -> tuple[Tensor, np.ndarray]:
    """Columnwise max over the unmasked rows of a [K, D] matrix.

    Returns a length-D vector and the attaining row indices. Raises
    :class:`EmptySetError` when no row is unmasked rather than returning
    -inf.
    """
    a = as_tensor(a)
    if a.data.ndim != 2:
        raise ValueError("max_pool_set expects a matrix")
    k = a.data.shape[0]
    if mask is None:
        mask = np.ones(k, dtype=bool)
    else:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (k,):
            raise ValueError(f"mask shape {mask.shape} does not match {k} rows")
    valid = np.flatnonzero(mask)
    if valid.size == 0:
        raise EmptySetError("max pooling over an empty point set")
    picked = gather_rows(a, valid)
    pooled, arg = segment_max(picked, [(0, valid.size)])
    return reshape(pooled, (a.data.shape[1],)), valid[arg[0]]


def zero_grads(params: Iterable[Tensor]) -> None:
    for p in params:
        p.zero_grad()
