"""Dense float64 tensors with reverse-mode automatic differentiation.

The graph is dynamic: every differentiable operation records its parents
and a local-gradient rule on the result node, and ``backward`` replays
those records in reverse topological order. The tape is implicit in this
node chain and is rebuilt on every forward pass. Tensors that do not
require gradients carry no records and are safe to share read-only
across threads.

Every forward operation validates that its output is finite; NaN/Inf is
treated as an error state and raises :class:`NumericsError` immediately,
which keeps training aborts close to their cause.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
from scipy import special

from .errors import NumericsError, ShapeError


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """A numpy float64 array plus an optional autodiff record."""

    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, *, op: str = "leaf",
                 _parents: tuple["Tensor", ...] = (),
                 _backward: Callable[[np.ndarray], tuple[np.ndarray, ...]] | None = None):
        arr = np.asarray(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise NumericsError(f"non-finite values produced by op '{op}'")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.op = op
        self.requires_grad = requires_grad
        if requires_grad:
            self._parents = _parents
            self._backward = _backward
        else:
            self._parents = ()
            self._backward = None

    # -- construction helpers ------------------------------------------------

    @staticmethod
    def _lift(x) -> "Tensor":
        return x if isinstance(x, Tensor) else Tensor(x)

    @classmethod
    def _result(cls, data, parents: Sequence["Tensor"], backward, op: str) -> "Tensor":
        needs = any(p.requires_grad for p in parents)
        if needs:
            return cls(data, requires_grad=True, op=op,
                       _parents=tuple(parents), _backward=backward)
        return cls(data, op=op)

    # -- basic introspection ---------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() requires a scalar, got shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        """Same data, no graph attachment."""
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    # -- elementwise arithmetic ------------------------------------------------

    def __add__(self, other) -> "Tensor":
        a, b = self, Tensor._lift(other)
        try:
            out = a.data + b.data
        except ValueError:
            raise ShapeError(f"add: shapes {a.shape} and {b.shape} do not broadcast") from None

        def backward(g):
            return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

        return Tensor._result(out, (a, b), backward, "add")

    __radd__ = __add__

    def __sub__(self, other) -> "Tensor":
        a, b = self, Tensor._lift(other)
        try:
            out = a.data - b.data
        except ValueError:
            raise ShapeError(f"sub: shapes {a.shape} and {b.shape} do not broadcast") from None

        def backward(g):
            return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

        return Tensor._result(out, (a, b), backward, "sub")

    def __rsub__(self, other) -> "Tensor":
        return Tensor._lift(other) - self

    def __neg__(self) -> "Tensor":
        return self * -1.0

    def __mul__(self, other) -> "Tensor":
        a, b = self, Tensor._lift(other)
        try:
            out = a.data * b.data
        except ValueError:
            raise ShapeError(f"mul: shapes {a.shape} and {b.shape} do not broadcast") from None

        def backward(g):
            return (_unbroadcast(g * b.data, a.shape),
                    _unbroadcast(g * a.data, b.shape))

        return Tensor._result(out, (a, b), backward, "mul")

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Tensor":
        a, b = self, Tensor._lift(other)
        try:
            out = a.data / b.data
        except ValueError:
            raise ShapeError(f"div: shapes {a.shape} and {b.shape} do not broadcast") from None

        def backward(g):
            return (_unbroadcast(g / b.data, a.shape),
                    _unbroadcast(-g * a.data / (b.data * b.data), b.shape))

        return Tensor._result(out, (a, b), backward, "div")

    def __rtruediv__(self, other) -> "Tensor":
        return Tensor._lift(other) / self

    def __matmul__(self, other) -> "Tensor":
        a, b = self, Tensor._lift(other)
        if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
            raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} do not conform")
        out = a.data @ b.data

        def backward(g):
            return g @ b.data.T, a.data.T @ g

        return Tensor._result(out, (a, b), backward, "matmul")

    # -- reductions --------------------------------------------------------------

    def sum(self, axis: int | None = None, keepdims: bool = False) -> "Tensor":
        out = self.data.sum(axis=axis, keepdims=keepdims)

        def backward(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, self.shape).copy(),)

        return Tensor._result(out, (self,), backward, "sum")

    def mean(self, axis: int | None = None, keepdims: bool = False) -> "Tensor":
        n = self.data.size if axis is None else self.shape[axis]
        out = self.data.mean(axis=axis, keepdims=keepdims)

        def backward(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, self.shape) / n,)

        return Tensor._result(out, (self,), backward, "mean")

    def squared_norm(self) -> "Tensor":
        """Sum of squared entries, as a scalar."""
        out = np.float64((self.data * self.data).sum())

        def backward(g):
            return (2.0 * g * self.data,)

        return Tensor._result(out, (self,), backward, "squared-norm")

    # -- elementwise nonlinearities ------------------------------------------------

    def exp(self) -> "Tensor":
        out = np.exp(self.data)

        def backward(g, out=out):
            return (g * out,)

        return Tensor._result(out, (self,), backward, "exp")

    def log(self) -> "Tensor":
        with np.errstate(divide="raise", invalid="raise"):
            try:
                out = np.log(self.data)
            except FloatingPointError:
                raise NumericsError("log of non-positive value") from None

        def backward(g):
            return (g / self.data,)

        return Tensor._result(out, (self,), backward, "log")

    def sqrt(self) -> "Tensor":
        with np.errstate(invalid="raise"):
            try:
                out = np.sqrt(self.data)
            except FloatingPointError:
                raise NumericsError("sqrt of negative value") from None

        def backward(g, out=out):
            return (g * 0.5 / out,)

        return Tensor._result(out, (self,), backward, "sqrt")

    def relu(self) -> "Tensor":
        mask = self.data > 0
        out = np.where(mask, self.data, 0.0)

        def backward(g, mask=mask):
            return (g * mask,)

        return Tensor._result(out, (self,), backward, "relu")

    def silu(self) -> "Tensor":
        sig = special.expit(self.data)  # overflow-safe sigmoid
        out = self.data * sig

        def backward(g, sig=sig):
            return (g * sig * (1.0 + self.data * (1.0 - sig)),)

        return Tensor._result(out, (self,), backward, "silu")

    def softmax(self, axis: int = -1) -> "Tensor":
        z = self.data - self.data.max(axis=axis, keepdims=True)
        e = np.exp(z)
        out = e / e.sum(axis=axis, keepdims=True)

        def backward(g, out=out):
            return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

        return Tensor._result(out, (self,), backward, "softmax")

    # -- structural ops ----------------------------------------------------------

    def __getitem__(self, key) -> "Tensor":
        out = self.data[key]

        def backward(g):
            full = np.zeros_like(self.data)
            np.add.at(full, key, g)
            return (full,)

        return Tensor._result(out, (self,), backward, "slice")

    @staticmethod
    def concat(tensors: Sequence["Tensor"], axis: int = 0) -> "Tensor":
        tensors = [Tensor._lift(t) for t in tensors]
        try:
            out = np.concatenate([t.data for t in tensors], axis=axis)
        except ValueError:
            shapes = [t.shape for t in tensors]
            raise ShapeError(f"concat: incompatible shapes {shapes}") from None
        sizes = [t.shape[axis] for t in tensors]
        splits = np.cumsum(sizes)[:-1]

        def backward(g):
            return tuple(np.split(g, splits, axis=axis))

        return Tensor._result(out, tensors, backward, "concat")

    # -- backward pass -------------------------------------------------------------

    def backward(self) -> None:
        """Populate ``.grad`` for every requires-grad ancestor of this scalar."""
        if self.data.size != 1:
            raise ShapeError(f"backward requires a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            return

        # Iterative topological sort; recursion would overflow on deep graphs.
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))

        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is None or node.grad is None:
                continue
            parent_grads = node._backward(node.grad)
            for parent, g in zip(node._parents, parent_grads):
                if not parent.requires_grad:
                    continue
                if parent.grad is None:
                    parent.grad = np.zeros_like(parent.data)
                parent.grad += g


_PRIMITIVES = {
    "add": lambda a, b: a + b,
    "sub": lambda a, b: a - b,
    "mul": lambda a, b: a * b,
    "scalar-mul": lambda a, s: a * float(s),
    "matmul": lambda a, b: a @ b,
    "sum": lambda a, **kw: a.sum(**kw),
    "mean": lambda a, **kw: a.mean(**kw),
    "concat": lambda *ts, **kw: Tensor.concat(ts, **kw),
    "slice": lambda a, key: a[key],
    "relu": lambda a: a.relu(),
    "silu": lambda a: a.silu(),
    "exp": lambda a: a.exp(),
    "log": lambda a: a.log(),
    "softmax": lambda a, **kw: a.softmax(**kw),
    "squared-norm": lambda a: a.squared_norm(),
}


def primitive_forward(op_kind: str, *inputs, **kwargs) -> Tensor:
    """Apply one primitive by name; the result carries its gradient record."""
    try:
        fn = _PRIMITIVES[op_kind]
    except KeyError:
        raise ShapeError(f"unknown op kind '{op_kind}'") from None
    return fn(*inputs, **kwargs)


def finite_difference_check(f: Callable[[Tensor], Tensor], x, h: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    `f` must be a deterministic Tensor -> scalar Tensor function. The
    relative error is |analytic - numeric| / (|analytic| + |numeric| + 1e-12),
    maximized over the components of `x`.
    """
    if h <= 0:
        raise ValueError("step h must be positive")
    base = np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64)

    probe = Tensor(base.copy(), requires_grad=True)
    loss = f(probe)
    loss.backward()
    analytic = probe.grad if probe.grad is not None else np.zeros_like(base)

    flat = base.reshape(-1)
    numeric = np.zeros_like(flat)
    for i in range(flat.size):
        bump = flat.copy()
        bump[i] = flat[i] + h
        hi = f(Tensor(bump.reshape(base.shape))).item()
        bump[i] = flat[i] - h
        lo = f(Tensor(bump.reshape(base.shape))).item()
        numeric[i] = (hi - lo) / (2.0 * h)
    numeric = numeric.reshape(base.shape)

    err = np.abs(analytic - numeric) / (np.abs(analytic) + np.abs(numeric) + 1e-12)
    return float(err.max()) if err.size else 0.0
