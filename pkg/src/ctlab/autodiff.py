"""Tape-based reverse-mode differentiation over float64 numpy arrays.

A `Tensor` wraps an ndarray plus the bookkeeping needed for backprop:
its parents in the computation graph and a vector-Jacobian closure.
The op set is deliberately small -- exactly what an MLP with time
conditioning, dropout masks, and weighted squared-error losses needs.
Constants (plain ndarrays / floats) are wrapped into leaf tensors on
the fly; their accumulated gradients are simply never read.
"""

from __future__ import annotations

import numpy as np


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


class Tensor:
    """One node of the tape.

    `value` is always a float64 ndarray.  `grad` is filled by
    `backward()`; leaves created directly from data have no parents and
    act as constants or differentiable inputs depending on whether the
    caller reads their `grad` afterwards.
    """

    __slots__ = ("value", "grad", "_parents", "_vjp")

    def __init__(self, value, _parents=(), _vjp=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self._parents = _parents
        self._vjp = _vjp

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def item(self) -> float:
        return float(self.value)

    def detach(self) -> "Tensor":
        """Stop-gradient: same value, no tape history."""
        return Tensor(self.value)

    # ------------------------------------------------------------------
    # backward pass
    # ------------------------------------------------------------------
    def backward(self) -> None:
        """Accumulate gradients of this scalar into every upstream node."""
        if self.value.size != 1:
            raise ValueError("backward() requires a scalar output")

        # iterative post-order over the DAG: parents precede children
        topo = []
        visited = {id(self)}
        stack = [(self, 0)]
        while stack:
            node, i = stack.pop()
            parents = node._parents
            if i < len(parents):
                stack.append((node, i + 1))
                p = parents[i]
                if id(p) not in visited:
                    visited.add(id(p))
                    stack.append((p, 0))
            else:
                topo.append(node)

        self.grad = np.ones_like(self.value)
        for node in reversed(topo):
            if node._vjp is None or node.grad is None:
                continue
            for parent, g in zip(node._parents, node._vjp(node.grad)):
                if g is None:
                    continue
                g = _unbroadcast(np.asarray(g, dtype=np.float64), parent.value.shape)
                if parent.grad is None:
                    parent.grad = g
                else:
                    parent.grad = parent.grad + g

    # ------------------------------------------------------------------
    # arithmetic
    # ------------------------------------------------------------------
    def __add__(self, other):
        a, b = self, _wrap(other)
        return Tensor(a.value + b.value, (a, b), lambda g: (g, g))

    __radd__ = __add__

    def __sub__(self, other):
        a, b = self, _wrap(other)
        return Tensor(a.value - b.value, (a, b), lambda g: (g, -g))

    def __rsub__(self, other):
        return _wrap(other) - self

    def __mul__(self, other):
        a, b = self, _wrap(other)
        return Tensor(a.value * b.value, (a, b),
                      lambda g: (g * b.value, g * a.value))

    __rmul__ = __mul__

    def __truediv__(self, other):
        a, b = self, _wrap(other)
        return Tensor(a.value / b.value, (a, b),
                      lambda g: (g / b.value, -g * a.value / (b.value * b.value)))

    def __rtruediv__(self, other):
        return _wrap(other) / self

    def __neg__(self):
        return Tensor(-self.value, (self,), lambda g: (-g,))

    def __pow__(self, exponent):
        if isinstance(exponent, Tensor):
            raise TypeError("only constant exponents are supported")
        c = float(exponent)
        out = self.value ** c
        return Tensor(out, (self,), lambda g: (g * c * self.value ** (c - 1.0),))

    def __matmul__(self, other):
        a, b = self, _wrap(other)
        return Tensor(a.value @ b.value, (a, b),
                      lambda g: (g @ b.value.T, a.value.T @ g))

    def __rmatmul__(self, other):
        return _wrap(other) @ self

    def __getitem__(self, key):
        def vjp(g):
            full = np.zeros_like(self.value)
            np.add.at(full, key, g)
            return (full,)
        return Tensor(self.value[key], (self,), vjp)

    # ------------------------------------------------------------------
    # reductions / reshaping
    # ------------------------------------------------------------------
    def sum(self, axis=None, keepdims=False):
        out = self.value.sum(axis=axis, keepdims=keepdims)

        def vjp(g):
            if axis is None:
                return (np.broadcast_to(g, self.value.shape),)
            gg = g if keepdims else np.expand_dims(g, axis)
            return (np.broadcast_to(gg, self.value.shape),)

        return Tensor(out, (self,), vjp)

    def mean(self, axis=None, keepdims=False):
        n = self.value.size if axis is None else self.value.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) / float(n)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return Tensor(self.value.reshape(shape), (self,),
                      lambda g: (g.reshape(self.value.shape),))

    # ------------------------------------------------------------------
    # elementwise nonlinearities
    # ------------------------------------------------------------------
    def exp(self):
        out = np.exp(self.value)
        return Tensor(out, (self,), lambda g: (g * out,))

    def log(self):
        return Tensor(np.log(self.value), (self,), lambda g: (g / self.value,))

    def sqrt(self):
        out = np.sqrt(self.value)
        return Tensor(out, (self,), lambda g: (g * 0.5 / out,))

    def tanh(self):
        out = np.tanh(self.value)
        return Tensor(out, (self,), lambda g: (g * (1.0 - out * out),))

    def sigmoid(self):
        out = 1.0 / (1.0 + np.exp(-self.value))
        return Tensor(out, (self,), lambda g: (g * out * (1.0 - out),))

    def relu(self):
        mask = self.value > 0
        return Tensor(self.value * mask, (self,), lambda g: (g * mask,))

    def silu(self):
        return self * self.sigmoid()


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def concat(tensors, axis: int = 1) -> Tensor:
    """Concatenate tensors (or constants) along `axis`."""
    ts = [_wrap(t) for t in tensors]
    sizes = [t.value.shape[axis] for t in ts]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor(np.concatenate([t.value for t in ts], axis=axis), tuple(ts), vjp)
