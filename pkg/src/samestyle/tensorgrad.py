"""Minimal reverse-mode automatic differentiation over float64 numpy arrays.

Every operation returns a new :class:`Tensor` holding its forward value and a
closure that pushes the output gradient back to its parents. Calling
:meth:`Tensor.backward` on a scalar walks the graph in reverse topological
order. A graph may be backpropagated once; build a fresh graph (new leaves)
for every step.

Conventions:

* ``relu``/``hinge`` use subgradient 0 at exactly 0.
* ``l2_normalize`` of a vector with norm below ``1e-12`` returns the zero
  vector and passes back a zero gradient.
"""
from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import BackwardError, NonScalarRoot, ShapeMismatch

NORM_EPS = 1e-12

_kink_trackers: list[list[float]] = []


@contextlib.contextmanager
def track_kinks():
    """Record the smallest |input| seen by any relu/hinge inside the block.

    Yields a one-element list whose entry is updated in place; used by
    gradient checks to reject inputs that sit on a kink.
    """
    box = [np.inf]
    _kink_trackers.append(box)
    try:
        yield box
    finally:
        _kink_trackers.remove(box)


def _note_kink(x: np.ndarray) -> None:
    if _kink_trackers and x.size:
        m = float(np.min(np.abs(x)))
        for box in _kink_trackers:
            box[0] = min(box[0], m)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_consumed")
    __array_ufunc__ = None  # make numpy defer to our reflected operators

    def __init__(self, data, requires_grad: bool = False, _parents: tuple = (), _backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward
        self._consumed = False

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    def backward(self) -> None:
        if self.data.size != 1:
            raise NonScalarRoot(f"backward needs a scalar root, got shape {self.shape}")
        if self._consumed:
            raise BackwardError("graph already backpropagated; rebuild it before calling backward again")

        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen and p.requires_grad:
                    stack.append((p, False))

        self._accumulate(np.ones_like(self.data))
        for node in reversed(order):
            node._consumed = True
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # operator sugar
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
        return scalar_mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, index):
        return getitem(self, index)

    @property
    def T(self):
        return transpose(self)

    def sum(self, axis=None):
        return sum_(self, axis)

    def mean(self, axis=None):
        return mean_over_axis(self, axis)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents: Sequence[Tensor], backward: Callable) -> Tensor:
    req = any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=req, _parents=tuple(parents) if req else (), _backward=backward if req else None)


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> tuple:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatch(f"{op}: cannot broadcast {a.shape} with {b.shape}") from None


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")

    def bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _make(a.data + b.data, (a, b), bw)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "sub")

    def bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g, b.shape))

    return _make(a.data - b.data, (a, b), bw)


def mul(a, b) -> Tensor:
    """Elementwise product with numpy broadcasting."""
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")

    def bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _make(a.data * b.data, (a, b), bw)


def scalar_mul(a, c: float) -> Tensor:
    a = as_tensor(a)
    c = float(c)

    def bw(g):
        a._accumulate(g * c)

    return _make(a.data * c, (a,), bw)


def matmul(a, b) -> Tensor:
    """``a @ b`` for ``a`` of shape (..., k) and 2-D ``b`` of shape (k, m)."""
    a, b = as_tensor(a), as_tensor(b)
    if b.ndim != 2 or a.ndim < 1 or a.shape[-1] != b.shape[0]:
        raise ShapeMismatch(f"matmul: {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def bw(g):
        if a.requires_grad:
            a._accumulate(g @ b.data.T)
        if b.requires_grad:
            k, m = b.shape
            b._accumulate(a.data.reshape(-1, k).T @ g.reshape(-1, m))

    return _make(out, (a, b), bw)


def transpose(a) -> Tensor:
    a = as_tensor(a)
    if a.ndim != 2:
        raise ShapeMismatch(f"transpose expects a matrix, got {a.shape}")

    def bw(g):
        a._accumulate(g.T)

    return _make(a.data.T, (a,), bw)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeMismatch(f"reshape: {a.shape} -> {shape}") from None

    def bw(g):
        a._accumulate(g.reshape(a.shape))

    return _make(out, (a,), bw)


def getitem(a, index) -> Tensor:
    a = as_tensor(a)
    out = a.data[index]
    parts = index if isinstance(index, tuple) else (index,)
    basic = all(isinstance(p, (slice, int, type(None), type(Ellipsis))) for p in parts)

    def bw(g):
        full = np.zeros_like(a.data)
        if basic:
            full[index] += g
        else:
            np.add.at(full, index, g)
        a._accumulate(full)

    return _make(out, (a,), bw)


def diag(a) -> Tensor:
    """Main diagonal of a square matrix as a vector."""
    a = as_tensor(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeMismatch(f"diag expects a square matrix, got {a.shape}")
    n = a.shape[0]

    def bw(g):
        full = np.zeros_like(a.data)
        full[np.arange(n), np.arange(n)] = g
        a._accumulate(full)

    return _make(np.diagonal(a.data).copy(), (a,), bw)


def sum_(a, axis=None) -> Tensor:
    a = as_tensor(a)
    out = a.data.sum(axis=axis)

    def bw(g):
        if axis is None:
            a._accumulate(np.broadcast_to(g, a.shape))
        else:
            a._accumulate(np.broadcast_to(np.expand_dims(g, axis), a.shape))

    return _make(out, (a,), bw)


def mean_over_axis(a, axis=None) -> Tensor:
    a = as_tensor(a)
    n = a.data.size if axis is None else a.shape[axis]
    return scalar_mul(sum_(a, axis), 1.0 / n)


def relu(a) -> Tensor:
    a = as_tensor(a)
    _note_kink(a.data)
    mask = a.data > 0

    def bw(g):
        a._accumulate(g * mask)

    return _make(np.where(mask, a.data, 0.0), (a,), bw)


def hinge(a) -> Tensor:
    """``max(0, a)`` elementwise."""
    return relu(a)


def square(a) -> Tensor:
    a = as_tensor(a)

    def bw(g):
        a._accumulate(2.0 * a.data * g)

    return _make(a.data * a.data, (a,), bw)


def dot(u, v) -> Tensor:
    """Inner product of two vectors."""
    u, v = as_tensor(u), as_tensor(v)
    if u.ndim != 1 or u.shape != v.shape:
        raise ShapeMismatch(f"dot: {u.shape} . {v.shape}")
    return sum_(mul(u, v))


def l2_normalize(a, axis: int = -1) -> Tensor:
    """Scale slices along ``axis`` to unit Euclidean norm."""
    a = as_tensor(a)
    norm = np.sqrt(np.sum(a.data * a.data, axis=axis, keepdims=True))
    live = norm >= NORM_EPS
    safe = np.where(live, norm, 1.0)
    y = np.where(live, a.data / safe, 0.0)

    def bw(g):
        proj = np.sum(g * y, axis=axis, keepdims=True)
        a._accumulate(np.where(live, (g - y * proj) / safe, 0.0))

    return _make(y, (a,), bw)


def finite_diff_check(f: Callable[[list[Tensor]], Tensor], params: Iterable[np.ndarray], step: float = 1e-5) -> float:
    """Compare reverse-mode gradients of ``f`` against central differences.

    ``f`` receives a list of leaf tensors (one per entry of ``params``) and
    must return a scalar tensor. Returns the max over all coordinates of
    ``|analytic - numeric| / max(1e-8, |analytic| + |numeric|)``.
    """
    arrays = [np.array(p, dtype=np.float64, copy=True) for p in params]
    leaves = [Tensor(p.copy(), requires_grad=True) for p in arrays]
    out = f(leaves)
    if out.requires_grad:
        out.backward()
    elif out.data.size != 1:
        raise NonScalarRoot(f"f must return a scalar, got shape {out.shape}")

    def value(vals):
        return float(f([Tensor(v) for v in vals]).data)

    worst = 0.0
    for idx, p in enumerate(arrays):
        analytic = leaves[idx].grad if leaves[idx].grad is not None else np.zeros_like(p)
        for coord in np.ndindex(p.shape):
            orig = p[coord]
            p[coord] = orig + step
            hi = value(arrays)
            p[coord] = orig - step
            lo = value(arrays)
            p[coord] = orig
            numeric = (hi - lo) / (2.0 * step)
            a = float(analytic[coord])
            err = abs(a - numeric) / max(1e-8, abs(a) + abs(numeric))
            worst = max(worst, err)
    return worst
