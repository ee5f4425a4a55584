"""Minimal deterministic tensor engine with reverse-mode gradients.

Tensors wrap a numpy array (float32 for training, float64 for gradient
checking) and record a closure per op that pushes gradients to the parents.
`backward()` runs the closures in reverse topological order.  Only the op
set the network actually needs is implemented; binary ops require equal
shapes (scalars are broadcast), everything else is an error.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError, NumericError, ShapeError


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, dtype=None, name=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{flag})"

    def item(self):
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data, requires_grad=False)

    # -- graph plumbing ----------------------------------------------------

    def _record(self, parents, backward):
        if self.requires_grad:
            self._parents = tuple(parents)
            self._backward = backward

    def _accumulate(self, g):
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = g.copy() if isinstance(g, np.ndarray) else np.asarray(g)
        else:
            self.grad = self.grad + g

    def backward(self):
        """Push gradients from this scalar to every requires_grad ancestor.

        The recorded graph is released afterwards so parameter tensors can be
        reused for the next forward pass.
        """
        if self.data.size != 1:
            raise ContractError(f"backward() needs a scalar loss, got shape {self.data.shape}")
        order = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))

        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
        for node in order:
            if node._backward is not None:
                node._parents = ()
                node._backward = None
                node.grad = None
            elif node.requires_grad and node.grad is not None:
                if not np.all(np.isfinite(node.grad)):
                    raise NumericError(f"non-finite gradient for {node.name or 'unnamed leaf'}")

    # -- elementwise ops ----------------------------------------------------

    def _coerce(self, other):
        if isinstance(other, Tensor):
            if other.shape != self.shape and other.size != 1 and self.size != 1:
                raise ShapeError(f"shape mismatch: {self.shape} vs {other.shape}")
            return other
        return Tensor(np.asarray(other, dtype=self.dtype))

    def __add__(self, other):
        other = self._coerce(other)
        out = Tensor(self.data + other.data,
                     requires_grad=self.requires_grad or other.requires_grad)

        def bwd(g):
            self._accumulate(_unbroadcast(g, self.shape))
            other._accumulate(_unbroadcast(g, other.shape))

        out._record((self, other), bwd)
        return out

    __radd__ = __add__

    def __neg__(self):
        out = Tensor(-self.data, requires_grad=self.requires_grad)
        out._record((self,), lambda g: self._accumulate(-g))
        return out

    def __sub__(self, other):
        other = self._coerce(other)
        out = Tensor(self.data - other.data,
                     requires_grad=self.requires_grad or other.requires_grad)

        def bwd(g):
            self._accumulate(_unbroadcast(g, self.shape))
            other._accumulate(_unbroadcast(-g, other.shape))

        out._record((self, other), bwd)
        return out

    def __rsub__(self, other):
        return self._coerce(other).__sub__(self)

    def __mul__(self, other):
        other = self._coerce(other)
        out = Tensor(self.data * other.data,
                     requires_grad=self.requires_grad or other.requires_grad)

        def bwd(g):
            self._accumulate(_unbroadcast(g * other.data, self.shape))
            other._accumulate(_unbroadcast(g * self.data, other.shape))

        out._record((self, other), bwd)
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._coerce(other)
        out = Tensor(self.data / other.data,
                     requires_grad=self.requires_grad or other.requires_grad)

        def bwd(g):
            self._accumulate(_unbroadcast(g / other.data, self.shape))
            other._accumulate(_unbroadcast(-g * self.data / (other.data * other.data),
                                           other.shape))

        out._record((self, other), bwd)
        return out

    def abs(self):
        # subgradient 0 at exact ties
        out = Tensor(np.abs(self.data), requires_grad=self.requires_grad)
        out._record((self,), lambda g: self._accumulate(g * np.sign(self.data)))
        return out

    def square(self):
        out = Tensor(self.data * self.data, requires_grad=self.requires_grad)
        out._record((self,), lambda g: self._accumulate(g * (2.0 * self.data)))
        return out

    def sqrt(self):
        # gradient defined as 0 where the input is exactly 0
        root = np.sqrt(self.data)
        out = Tensor(root, requires_grad=self.requires_grad)

        def bwd(g):
            denom = 2.0 * root
            self._accumulate(np.divide(g, denom, out=np.zeros_like(g), where=denom > 0))

        out._record((self,), bwd)
        return out

    def relu(self):
        out = Tensor(np.maximum(self.data, 0), requires_grad=self.requires_grad)
        out._record((self,), lambda g: self._accumulate(g * (self.data > 0)))
        return out

    def sigmoid(self):
        s = 1.0 / (1.0 + np.exp(-self.data))
        out = Tensor(s, requires_grad=self.requires_grad)
        out._record((self,), lambda g: self._accumulate(g * s * (1.0 - s)))
        return out

    def tanh(self):
        t = np.tanh(self.data)
        out = Tensor(t, requires_grad=self.requires_grad)
        out._record((self,), lambda g: self._accumulate(g * (1.0 - t * t)))
        return out

    # -- reductions and structure -------------------------------------------

    def sum(self, axis=None):
        out = Tensor(self.data.sum(axis=axis), requires_grad=self.requires_grad)

        def bwd(g):
            if axis is None:
                self._accumulate(np.broadcast_to(g, self.shape).astype(self.dtype))
            else:
                axes = (axis,) if isinstance(axis, int) else tuple(axis)
                expanded = np.expand_dims(g, tuple(a % self.data.ndim for a in axes))
                self._accumulate(np.broadcast_to(expanded, self.shape).astype(self.dtype))

        out._record((self,), bwd)
        return out

    def mean(self, axis=None):
        n = self.size if axis is None else np.prod(
            [self.shape[a] for a in ((axis,) if isinstance(axis, int) else axis)])
        return self.sum(axis=axis) * (1.0 / float(n))

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out = Tensor(self.data.reshape(shape), requires_grad=self.requires_grad)
        out._record((self,), lambda g: self._accumulate(g.reshape(self.shape)))
        return out

    def __getitem__(self, idx):
        out = Tensor(self.data[idx], requires_grad=self.requires_grad)

        def bwd(g):
            buf = np.zeros_like(self.data)
            buf[idx] += g
            self._accumulate(buf)

        out._record((self,), bwd)
        return out


def concat(tensors, axis=0):
    tensors = list(tensors)
    if not tensors:
        raise ContractError("concat of an empty list")
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis),
                 requires_grad=any(t.requires_grad for t in tensors))

    def bwd(g):
        offset = 0
        for t in tensors:
            extent = t.shape[axis]
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(offset, offset + extent)
            t._accumulate(g[tuple(sl)])
            offset += extent

    out._record(tuple(tensors), bwd)
    return out


def _unbroadcast(g, shape):
    """Reduce a gradient back to `shape` (only scalar broadcasting occurs)."""
    if g.shape == shape:
        return g
    return g.sum().reshape(shape) if shape in ((), (1,)) else np.broadcast_to(g, shape)


def as_tensor(value, dtype=np.float32):
    return value if isinstance(value, Tensor) else Tensor(value, dtype=dtype)


def check_finite(t, what="tensor"):
    """Raise NumericError if `t` holds NaN/Inf; returns `t` unchanged."""
    data = t.data if isinstance(t, Tensor) else t
    if not np.all(np.isfinite(data)):
        raise NumericError(f"non-finite values in {what}")
    return t
