"""Reverse-mode automatic differentiation over numpy arrays.

A small tape engine: each `Tensor` wraps a float64 ndarray and remembers
the closure that propagates its output gradient to its parents. Backward
runs once over a topological order. Only the operations the flows and
networks need are implemented, each with full broadcasting support.
"""

from __future__ import annotations

from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

ArrayLike = Union[np.ndarray, float, int, "Tensor"]


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents")

    def __init__(self, data, requires_grad: bool = False,
                 parents: Sequence["Tensor"] = (),
                 backward: Optional[Callable[[np.ndarray], None]] = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self.grad: Optional[np.ndarray] = None
        self._parents = tuple(parents)
        self._backward = backward

    # -- bookkeeping ---------------------------------------------------
    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = g.copy()
        else:
            self.grad += g

    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order: List[Tensor] = []
        seen = set()
        stack: List[Tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))
        self._accumulate(np.asarray(grad, dtype=np.float64))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # -- arithmetic ----------------------------------------------------
    def __add__(self, other: ArrayLike) -> "Tensor":
        o = _wrap(other)
        out = Tensor(self.data + o.data, parents=(self, o))

        def backward(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g, self.shape))
            if o.requires_grad:
                o._accumulate(_unbroadcast(g, o.shape))

        out._backward = backward
        return out

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        out = Tensor(-self.data, parents=(self,))

        def backward(g):
            if self.requires_grad:
                self._accumulate(-g)

        out._backward = backward
        return out

    def __sub__(self, other: ArrayLike) -> "Tensor":
        return self + (-_wrap(other))

    def __rsub__(self, other: ArrayLike) -> "Tensor":
        return _wrap(other) + (-self)

    def __mul__(self, other: ArrayLike) -> "Tensor":
        o = _wrap(other)
        out = Tensor(self.data * o.data, parents=(self, o))

        def backward(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g * o.data, self.shape))
            if o.requires_grad:
                o._accumulate(_unbroadcast(g * self.data, o.shape))

        out._backward = backward
        return out

    __rmul__ = __mul__

    def __truediv__(self, other: ArrayLike) -> "Tensor":
        o = _wrap(other)
        out = Tensor(self.data / o.data, parents=(self, o))

        def backward(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g / o.data, self.shape))
            if o.requires_grad:
                o._accumulate(_unbroadcast(-g * self.data / o.data**2, o.shape))

        out._backward = backward
        return out

    def __rtruediv__(self, other: ArrayLike) -> "Tensor":
        return _wrap(other) / self

    def __pow__(self, exponent: float) -> "Tensor":
        if isinstance(exponent, Tensor):
            raise TypeError("only constant exponents are supported")
        out = Tensor(self.data**exponent, parents=(self,))

        def backward(g):
            if self.requires_grad:
                self._accumulate(g * exponent * self.data ** (exponent - 1))

        out._backward = backward
        return out

    def __matmul__(self, other: "Tensor") -> "Tensor":
        o = _wrap(other)
        out = Tensor(self.data @ o.data, parents=(self, o))

        def backward(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g @ o.data.swapaxes(-1, -2), self.shape))
            if o.requires_grad:
                o._accumulate(_unbroadcast(self.data.swapaxes(-1, -2) @ g, o.shape))

        out._backward = backward
        return out

    # -- elementwise functions ------------------------------------------
    def exp(self) -> "Tensor":
        val = np.exp(self.data)
        out = Tensor(val, parents=(self,))

        def backward(g):
            if self.requires_grad:
                self._accumulate(g * val)

        out._backward = backward
        return out

    def log(self) -> "Tensor":
        out = Tensor(np.log(self.data), parents=(self,))

        def backward(g):
            if self.requires_grad:
                self._accumulate(g / self.data)

        out._backward = backward
        return out

    def tanh(self) -> "Tensor":
        val = np.tanh(self.data)
        out = Tensor(val, parents=(self,))

        def backward(g):
            if self.requires_grad:
                self._accumulate(g * (1.0 - val**2))

        out._backward = backward
        return out

    def sigmoid(self) -> "Tensor":
        val = np.where(self.data >= 0,
                       1.0 / (1.0 + np.exp(-np.abs(self.data))),
                       np.exp(-np.abs(self.data)) / (1.0 + np.exp(-np.abs(self.data))))
        out = Tensor(val, parents=(self,))

        def backward(g):
            if self.requires_grad:
                self._accumulate(g * val * (1.0 - val))

        out._backward = backward
        return out

    def relu(self) -> "Tensor":
        mask = self.data > 0
        out = Tensor(np.where(mask, self.data, 0.0), parents=(self,))

        def backward(g):
            if self.requires_grad:
                self._accumulate(g * mask)

        out._backward = backward
        return out

    def softplus(self) -> "Tensor":
        # log(1 + e^x), stable for large |x|
        val = np.logaddexp(0.0, self.data)
        out = Tensor(val, parents=(self,))
        sig = np.where(self.data >= 0,
                       1.0 / (1.0 + np.exp(-np.abs(self.data))),
                       np.exp(-np.abs(self.data)) / (1.0 + np.exp(-np.abs(self.data))))

        def backward(g):
            if self.requires_grad:
                self._accumulate(g * sig)

        out._backward = backward
        return out

    # -- reductions & shaping --------------------------------------------
    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        out = Tensor(self.data.sum(axis=axis, keepdims=keepdims), parents=(self,))

        def backward(g):
            if not self.requires_grad:
                return
            if axis is None:
                self._accumulate(np.broadcast_to(g, self.shape).copy()
                                 if np.ndim(g) else np.full(self.shape, g))
            else:
                gg = g if keepdims else np.expand_dims(g, axis)
                self._accumulate(np.broadcast_to(gg, self.shape).copy())

        out._backward = backward
        return out

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        if axis is None:
            n = self.size
        elif isinstance(axis, tuple):
            n = int(np.prod([self.shape[a] for a in axis]))
        else:
            n = self.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out = Tensor(self.data.reshape(shape), parents=(self,))

        def backward(g):
            if self.requires_grad:
                self._accumulate(g.reshape(self.shape))

        out._backward = backward
        return out

    def __getitem__(self, key) -> "Tensor":
        out = Tensor(self.data[key], parents=(self,))

        def backward(g):
            if self.requires_grad:
                full = np.zeros(self.shape)
                np.add.at(full, key, g)
                self._accumulate(full)

        out._backward = backward
        return out

    def take_along_axis(self, indices: np.ndarray, axis: int) -> "Tensor":
        idx = np.asarray(indices)
        out = Tensor(np.take_along_axis(self.data, idx, axis=axis), parents=(self,))

        def backward(g):
            if self.requires_grad:
                full = np.zeros(self.shape)
                np.add.at(full, _along_axis_index(full.shape, idx, axis), g)
                self._accumulate(full)

        out._backward = backward
        return out

    def cumsum(self, axis: int = -1) -> "Tensor":
        out = Tensor(np.cumsum(self.data, axis=axis), parents=(self,))

        def backward(g):
            if self.requires_grad:
                rev = np.flip(np.cumsum(np.flip(g, axis=axis), axis=axis), axis=axis)
                self._accumulate(rev)

        out._backward = backward
        return out


def _along_axis_index(shape, idx, axis):
    """Fancy-index tuple equivalent to take_along_axis addressing."""
    grids = list(np.indices(idx.shape))
    grids[axis] = idx
    return tuple(grids)


def _wrap(value: ArrayLike) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def where(cond: np.ndarray, a: ArrayLike, b: ArrayLike) -> Tensor:
    """Elementwise select; `cond` is a plain boolean array (not differentiated)."""
    cond = np.asarray(cond, dtype=bool)
    ta, tb = _wrap(a), _wrap(b)
    out = Tensor(np.where(cond, ta.data, tb.data), parents=(ta, tb))

    def backward(g):
        if ta.requires_grad:
            ta._accumulate(_unbroadcast(np.where(cond, g, 0.0), ta.shape))
        if tb.requires_grad:
            tb._accumulate(_unbroadcast(np.where(cond, 0.0, g), tb.shape))

    out._backward = backward
    return out


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    ts = [_wrap(t) for t in tensors]
    out = Tensor(np.concatenate([t.data for t in ts], axis=axis), parents=ts)
    sizes = [t.shape[axis] for t in ts]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        for t, piece in zip(ts, np.split(g, splits, axis=axis)):
            if t.requires_grad:
                t._accumulate(piece)

    out._backward = backward
    return out


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    # max-shift is constant w.r.t. the graph; softmax is shift-invariant
    shifted = x - np.max(x.data, axis=axis, keepdims=True)
    e = shifted.exp()
    return e / e.sum(axis=axis, keepdims=True)
