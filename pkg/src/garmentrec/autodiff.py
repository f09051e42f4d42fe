"""Minimal reverse-mode gradient engine over dense numpy arrays.

Just enough operations for the line-regression GCN and the occupancy MLP:
broadcasting arithmetic, matmul, relu/sigmoid, reductions, row gathering and
an axis-min whose gradient follows the forward argmin (lowest index on ties).
"""

from __future__ import annotations

import numpy as np


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum grad down to `shape` (inverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, s in enumerate(shape):
        if s == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    # -- construction helpers -------------------------------------------------

    @staticmethod
    def _lift(x) -> "Tensor":
        return x if isinstance(x, Tensor) else Tensor(x)

    @staticmethod
    def _node(data, parents, backward) -> "Tensor":
        out = Tensor(data, requires_grad=any(p.requires_grad for p in parents))
        if out.requires_grad:
            out._parents = tuple(parents)
            out._backward = backward
        return out

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- arithmetic ------------------------------------------------------------

    def __add__(self, other):
        other = self._lift(other)
        def bw(g):
            return (_unbroadcast(g, self.data.shape),
                    _unbroadcast(g, other.data.shape))
        return self._node(self.data + other.data, (self, other), bw)

    __radd__ = __add__

    def __neg__(self):
        return self._node(-self.data, (self,), lambda g: (-g,))

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) + (-self)

    def __mul__(self, other):
        other = self._lift(other)
        def bw(g):
            return (_unbroadcast(g * other.data, self.data.shape),
                    _unbroadcast(g * self.data, other.data.shape))
        return self._node(self.data * other.data, (self, other), bw)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._lift(other)
        def bw(g):
            return (_unbroadcast(g / other.data, self.data.shape),
                    _unbroadcast(-g * self.data / other.data**2, other.data.shape))
        return self._node(self.data / other.data, (self, other), bw)

    def __matmul__(self, other):
        other = self._lift(other)
        def bw(g):
            ga = g @ other.data.T if other.data.ndim == 2 else np.outer(g, other.data)
            gb = self.data.T @ g
            return ga, gb
        return self._node(self.data @ other.data, (self, other), bw)

    def __pow__(self, exponent: float):
        e = float(exponent)
        def bw(g):
            return (g * e * self.data ** (e - 1),)
        return self._node(self.data ** e, (self,), bw)

    # -- nonlinearities ----------------------------------------------------------

    def relu(self):
        mask = self.data > 0
        return self._node(self.data * mask, (self,), lambda g: (g * mask,))

    def sigmoid(self):
        s = 1.0 / (1.0 + np.exp(-np.clip(self.data, -60, 60)))
        return self._node(s, (self,), lambda g: (g * s * (1 - s),))

    def exp(self):
        e = np.exp(self.data)
        return self._node(e, (self,), lambda g: (g * e,))

    def log(self):
        return self._node(np.log(self.data), (self,), lambda g: (g / self.data,))

    def sqrt(self):
        r = np.sqrt(self.data)
        return self._node(r, (self,), lambda g: (g / (2 * r),))

    # -- shape / indexing ----------------------------------------------------------

    def reshape(self, *shape):
        orig = self.data.shape
        return self._node(self.data.reshape(*shape), (self,),
                          lambda g: (g.reshape(orig),))

    def gather_rows(self, idx):
        """Select rows (first axis); gradient scatters with accumulation."""
        idx = np.asarray(idx, dtype=np.int64)
        def bw(g):
            out = np.zeros_like(self.data)
            np.add.at(out, idx, g)
            return (out,)
        return self._node(self.data[idx], (self,), bw)

    def concat_cols(self, other):
        other = self._lift(other)
        n = self.data.shape[1]
        def bw(g):
            return g[:, :n], g[:, n:]
        return self._node(np.concatenate([self.data, other.data], axis=1),
                          (self, other), bw)

    # -- reductions -----------------------------------------------------------------

    def sum(self, axis=None):
        def bw(g):
            if axis is None:
                return (np.broadcast_to(g, self.data.shape).copy(),)
            return (np.broadcast_to(np.expand_dims(g, axis), self.data.shape).copy(),)
        return self._node(self.data.sum(axis=axis), (self,), bw)

    def mean(self, axis=None):
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis) * (1.0 / n)

    def min(self, axis: int):
        """Min along an axis; the gradient flows to the forward argmin
        (numpy argmin: lowest index wins ties)."""
        arg = self.data.argmin(axis=axis)
        val = np.take_along_axis(self.data, np.expand_dims(arg, axis),
                                 axis=axis).squeeze(axis)
        def bw(g):
            out = np.zeros_like(self.data)
            np.put_along_axis(out, np.expand_dims(arg, axis),
                              np.expand_dims(g, axis), axis=axis)
            return (out,)
        return self._node(val, (self,), bw)

    # -- losses -----------------------------------------------------------------------

    def bce_with_logits(self, targets) -> "Tensor":
        """Mean binary cross-entropy on logits; numerically stable."""
        y = np.asarray(targets, dtype=np.float64).reshape(self.data.shape)
        z = self.data
        loss = np.maximum(z, 0) - z * y + np.log1p(np.exp(-np.abs(z)))
        def bw(g):
            s = 1.0 / (1.0 + np.exp(-z))
            return (g * (s - y) / z.size,)
        return self._node(loss.mean(), (self,), bw)

    # -- engine -----------------------------------------------------------------------

    def backward(self):
        if self.data.shape != ():
            raise ValueError("backward requires a scalar loss")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is None:
                continue
            grads = node._backward(node.grad)
            for parent, g in zip(node._parents, grads):
                if not parent.requires_grad:
                    continue
                if parent.grad is None:
                    parent.grad = np.zeros_like(parent.data)
                parent.grad = parent.grad + g

    def zero_grad(self):
        self.grad = None


class Adam:
    """Deterministic Adam over a flat parameter list."""

    def __init__(self, params: list[Tensor], lr: float = 5e-5,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for i, p in enumerate(self.params):
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            self.m[i] = b1 * self.m[i] + (1 - b1) * g
            self.v[i] = b2 * self.v[i] + (1 - b2) * g * g
            mh = self.m[i] / (1 - b1**self.t)
            vh = self.v[i] / (1 - b2**self.t)
            p.data = p.data - self.lr * mh / (np.sqrt(vh) + self.eps)

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()
