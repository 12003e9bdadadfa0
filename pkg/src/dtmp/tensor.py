"""Dense float64 tensors with tape-based reverse-mode differentiation.

Every tensor produced by an operation remembers its parents and a closure that
maps the output gradient to parent gradients. ``backward`` linearises that
graph into a :class:`Tape` (parents before children) and replays it in reverse.

Axis convention for network activations is ``(batch, time, node, feature)``.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Iterator, Optional, Sequence

import numpy as np

DTYPE = np.float64

_grad_enabled = True


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording inside the block (inference, parameter updates)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def is_grad_enabled() -> bool:
    return _grad_enabled


class ShapeError(ValueError):
    pass


class Tensor:
    """N-dimensional float64 array that can take part in differentiation."""

    __slots__ = ("data", "requires_grad", "grad", "name", "_parents", "_backward")
    __array_priority__ = 100.0

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        arr = np.array(data, dtype=DTYPE, copy=True) if not isinstance(data, np.ndarray) else data
        if arr.dtype != DTYPE:
            arr = arr.astype(DTYPE)
        self.data: np.ndarray = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = np.zeros_like(arr) if requires_grad else None
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Optional[Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]] = None

    # -- basic properties -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def zero_grad(self) -> None:
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        tag = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{tag})"

    # -- operators ---------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self) -> "Tensor":
        return mean(self)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes) -> "Tensor":
        return transpose(self, axes or None)

    @property
    def T(self) -> "Tensor":
        return transpose(self, None)

    def backward(self) -> None:
        backward(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=DTYPE))


def _make(data: np.ndarray, parents: tuple[Tensor, ...], grad_fn) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = grad_fn
    return out


def unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _check_broadcast(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


# -- binary elementwise ------------------------------------------------------
def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("add", a, b)
    sa, sb = a.shape, b.shape
    return _make(a.data + b.data, (a, b), lambda g: (unbroadcast(g, sa), unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("sub", a, b)
    sa, sb = a.shape, b.shape
    return _make(a.data - b.data, (a, b), lambda g: (unbroadcast(g, sa), unbroadcast(-g, sb)))


def mul(a, b) -> Tensor:
    """Hadamard product with broadcasting."""
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("hadamard", a, b)
    ad, bd = a.data, b.data
    return _make(
        ad * bd,
        (a, b),
        lambda g: (unbroadcast(g * bd, ad.shape), unbroadcast(g * ad, bd.shape)),
    )


# -- unary elementwise -------------------------------------------------------
def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    # np.maximum propagates NaN, so bad inputs surface in the loss
    return _make(np.maximum(x.data, 0.0), (x,), lambda g: (g * mask,))


def sigmoid(x: Tensor) -> Tensor:
    y = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return _make(y, (x,), lambda g: (g * y * (1.0 - y),))


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return _make(y, (x,), lambda g: (g * (1.0 - y * y),))


def tabs(x: Tensor) -> Tensor:
    s = np.sign(x.data)
    return _make(np.abs(x.data), (x,), lambda g: (g * s,))


_UNARY = {"relu": relu, "sigmoid": sigmoid, "tanh": tanh, "abs": tabs}
_BINARY = {"add": add, "hadamard": mul, "sub": sub}


def elementwise(op_kind: str, x: Tensor, y: Optional[Tensor] = None) -> Tensor:
    """Dispatch an elementwise operation by name."""
    if op_kind in _UNARY:
        if y is not None:
            raise TypeError(f"{op_kind} is unary")
        return _UNARY[op_kind](x)
    if op_kind in _BINARY:
        if y is None:
            raise TypeError(f"{op_kind} needs two operands")
        return _BINARY[op_kind](x, y)
    raise ValueError(f"unknown elementwise op {op_kind!r}")


# -- reductions and reshaping ------------------------------------------------
def tsum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    shape = x.shape
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def grad_fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _make(np.asarray(out, dtype=DTYPE), (x,), grad_fn)


def mean(x: Tensor) -> Tensor:
    return mul(tsum(x), 1.0 / x.size)


def reshape(x: Tensor, shape) -> Tensor:
    old = x.shape
    return _make(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def transpose(x: Tensor, axes=None) -> Tensor:
    inv = None if axes is None else tuple(np.argsort(axes))
    return _make(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inv),))


def getitem(x: Tensor, index) -> Tensor:
    shape = x.shape
    parts = index if isinstance(index, tuple) else (index,)
    basic = all(isinstance(p, (int, np.integer, slice)) or p is Ellipsis or p is None for p in parts)

    def grad_fn(g):
        out = np.zeros(shape, dtype=DTYPE)
        if basic:
            out[index] = g
        else:
            np.add.at(out, index, g)
        return (out,)

    return _make(np.array(x.data[index], dtype=DTYPE), (x,), grad_fn)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = tuple(as_tensor(t) for t in tensors)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    return _make(
        np.concatenate([t.data for t in tensors], axis=axis),
        tensors,
        lambda g: tuple(np.split(g, splits, axis=axis)),
    )


# -- linear algebra ----------------------------------------------------------
def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes; leading axes broadcast.

    A 2-D right operand is applied to every row of ``a`` through one flat GEMM.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    ad, bd = a.data, b.data
    if bd.ndim == 2:
        flat = ad.reshape(-1, ad.shape[-1])
        out = (flat @ bd).reshape(ad.shape[:-1] + (bd.shape[1],))

        def grad_fn(g):
            g2 = g.reshape(-1, bd.shape[1])
            return (g2 @ bd.T).reshape(ad.shape), flat.T @ g2

        return _make(out, (a, b), grad_fn)
    try:
        out = np.matmul(ad, bd)
    except ValueError:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}") from None

    def grad_fn(g):
        ga = np.matmul(g, np.swapaxes(bd, -1, -2))
        gb = np.matmul(np.swapaxes(ad, -1, -2), g)
        return unbroadcast(ga, ad.shape), unbroadcast(gb, bd.shape)

    return _make(out, (a, b), grad_fn)


def node_mix(adj: Tensor, h: Tensor, node_axis: int = 2) -> Tensor:
    """Aggregate over nodes: ``out[..., i, :] = sum_j adj[i, j] * h[..., j, :]``.

    ``adj`` is (N, N); ``h`` carries the node axis at ``node_axis``.
    """
    if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
        raise ShapeError(f"node_mix: adjacency must be square, got {adj.shape}")
    if h.shape[node_axis] != adj.shape[1]:
        raise ShapeError(
            f"node_mix: adjacency {adj.shape} does not match node axis of {h.shape}"
        )
    A, hd = adj.data, h.data
    out = np.moveaxis(np.tensordot(A, hd, axes=([1], [node_axis])), 0, node_axis)

    def grad_fn(g):
        gA = np.tensordot(
            np.moveaxis(g, node_axis, 0), np.moveaxis(hd, node_axis, 0),
            axes=(tuple(range(1, hd.ndim)), tuple(range(1, hd.ndim))),
        )
        gh = np.moveaxis(np.tensordot(A.T, g, axes=([1], [node_axis])), 0, node_axis)
        return gA, gh

    return _make(np.ascontiguousarray(out), (adj, h), grad_fn)


# -- network-specific primitives ---------------------------------------------
def row_softmax(m: Tensor) -> Tensor:
    """Softmax along the last axis, stabilised by subtracting the row max."""
    if m.ndim < 1 or m.shape[-1] < 1:
        raise ShapeError(f"row_softmax: need a non-empty trailing axis, got {m.shape}")
    z = m.data - m.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def grad_fn(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _make(y, (m,), grad_fn)


def _shift_array(x: np.ndarray, d: int, axis: int) -> np.ndarray:
    out = np.zeros_like(x)
    T = x.shape[axis]
    if d < T:
        dst = [slice(None)] * x.ndim
        src = [slice(None)] * x.ndim
        dst[axis] = slice(d, T)
        src[axis] = slice(0, T - d)
        out[tuple(dst)] = x[tuple(src)]
    return out


def _unshift_array(g: np.ndarray, d: int, axis: int) -> np.ndarray:
    out = np.zeros_like(g)
    T = g.shape[axis]
    if d < T:
        dst = [slice(None)] * g.ndim
        src = [slice(None)] * g.ndim
        dst[axis] = slice(0, T - d)
        src[axis] = slice(d, T)
        out[tuple(dst)] = g[tuple(src)]
    return out


def temporal_shift(h: Tensor, d: int, axis: int = 1) -> Tensor:
    """Move values ``d`` steps later along ``axis``; the last ``d`` fall off, the first ``d`` become 0."""
    d = int(d)
    if d < 0:
        raise ValueError(f"shift must be non-negative, got {d}")
    if d == 0:
        return h
    return _make(
        _shift_array(h.data, d, axis), (h,), lambda g: (_unshift_array(g, d, axis),)
    )


def dropout(x: Tensor, rate: float, training: bool, rng: Optional[np.random.Generator]) -> Tensor:
    """Inverted dropout. Identity in evaluation mode or when ``rate == 0``."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode needs a random generator")
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return _make(x.data * mask, (x,), lambda g: (g * mask,))


# -- reverse pass ------------------------------------------------------------
class Tape:
    """Operation nodes in topological order (every node after its inputs)."""

    def __init__(self, nodes: Iterable[Tensor] = ()):
        self.nodes: list[Tensor] = list(nodes)

    def __len__(self) -> int:
        return len(self.nodes)

    def __iter__(self):
        return iter(self.nodes)

    @classmethod
    def record(cls, output: Tensor) -> "Tape":
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(output, False)]
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
        return cls(order)


def backward(loss: Tensor, tape: Optional[Tape] = None) -> dict[int, np.ndarray]:
    """Fill ``.grad`` of every tensor that requires it with d(loss)/d(tensor).

    Gradients are added onto existing ``.grad`` buffers, so call ``zero_grad``
    between steps. Returns the gradient map keyed by ``id(tensor)``.
    """
    if loss.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if tape is None:
        tape = Tape.record(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        g = grads.get(id(node))
        if g is None:
            continue
        if node.requires_grad:
            node.grad = g if node.grad is None else node.grad + g
        if node._backward is None:
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
    return grads
