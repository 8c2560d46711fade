"""Minimal reverse-mode automatic differentiation over float64 numpy arrays.

Just enough machinery for two-layer perceptrons, batch normalization, softmax
attention, and the composite training loss: elementwise arithmetic, matmul,
reductions, reshapes, gathers, and concatenation.  Tensors built from inputs
that do not require gradients skip graph construction entirely, so the same
code path doubles as a plain forward evaluator.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


class ShapeMismatch(ValueError):
    """Operand shapes are incompatible with the requested operation."""


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcasted gradient back to the original operand shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        _parents: tuple["Tensor", ...] = (),
        _backward: Callable[[np.ndarray], None] | None = None,
    ):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, grad={self.requires_grad})"

    # -- graph plumbing -------------------------------------------------

    def _accumulate(self, grad: np.ndarray) -> None:
        self.grad = grad if self.grad is None else self.grad + grad

    def backward(self) -> None:
        """Populate .grad on every reachable tensor; only scalars may seed."""
        if self.data.size != 1:
            raise ShapeMismatch(f"backward needs a scalar, got shape {self.data.shape}")
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
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        for node in topo:
            node.grad = None
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- arithmetic ------------------------------------------------------

    def __add__(self, other) -> "Tensor":
        other = as_tensor(other)
        data = self.data + other.data
        if not (self.requires_grad or other.requires_grad):
            return Tensor(data)

        def bwd(g: np.ndarray) -> None:
            self._accumulate(_unbroadcast(g, self.data.shape))
            other._accumulate(_unbroadcast(g, other.data.shape))

        return Tensor(data, True, (self, other), bwd)

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        if not self.requires_grad:
            return Tensor(-self.data)

        def bwd(g: np.ndarray) -> None:
            self._accumulate(-g)

        return Tensor(-self.data, True, (self,), bwd)

    def __sub__(self, other) -> "Tensor":
        return self + (-as_tensor(other))

    def __rsub__(self, other) -> "Tensor":
        return as_tensor(other) + (-self)

    def __mul__(self, other) -> "Tensor":
        other = as_tensor(other)
        data = self.data * other.data
        if not (self.requires_grad or other.requires_grad):
            return Tensor(data)

        def bwd(g: np.ndarray) -> None:
            self._accumulate(_unbroadcast(g * other.data, self.data.shape))
            other._accumulate(_unbroadcast(g * self.data, other.data.shape))

        return Tensor(data, True, (self, other), bwd)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Tensor":
        other = as_tensor(other)
        data = self.data / other.data
        if not (self.requires_grad or other.requires_grad):
            return Tensor(data)

        def bwd(g: np.ndarray) -> None:
            self._accumulate(_unbroadcast(g / other.data, self.data.shape))
            other._accumulate(
                _unbroadcast(-g * self.data / (other.data * other.data), other.data.shape)
            )

        return Tensor(data, True, (self, other), bwd)

    def __rtruediv__(self, other) -> "Tensor":
        return as_tensor(other) / self

    def __pow__(self, exponent: float) -> "Tensor":
        data = self.data**exponent
        if not self.requires_grad:
            return Tensor(data)

        def bwd(g: np.ndarray) -> None:
            self._accumulate(g * exponent * self.data ** (exponent - 1))

        return Tensor(data, True, (self,), bwd)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        if self.data.ndim != 2 or other.data.ndim != 2:
            raise ShapeMismatch("matmul expects 2-D operands")
        if self.data.shape[1] != other.data.shape[0]:
            raise ShapeMismatch(
                f"matmul inner dims differ: {self.data.shape} @ {other.data.shape}"
            )
        data = self.data @ other.data
        if not (self.requires_grad or other.requires_grad):
            return Tensor(data)

        def bwd(g: np.ndarray) -> None:
            self._accumulate(g @ other.data.T)
            other._accumulate(self.data.T @ g)

        return Tensor(data, True, (self, other), bwd)

    # -- elementwise nonlinear -------------------------------------------

    def relu(self) -> "Tensor":
        data = np.maximum(self.data, 0.0)
        if not self.requires_grad:
            return Tensor(data)
        mask = self.data > 0.0

        def bwd(g: np.ndarray) -> None:
            self._accumulate(g * mask)

        return Tensor(data, True, (self,), bwd)

    def exp(self) -> "Tensor":
        data = np.exp(self.data)
        if not self.requires_grad:
            return Tensor(data)

        def bwd(g: np.ndarray) -> None:
            self._accumulate(g * data)

        return Tensor(data, True, (self,), bwd)

    def log(self) -> "Tensor":
        data = np.log(self.data)
        if not self.requires_grad:
            return Tensor(data)

        def bwd(g: np.ndarray) -> None:
            self._accumulate(g / self.data)

        return Tensor(data, True, (self,), bwd)

    # -- reductions and shape --------------------------------------------

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        data = self.data.sum(axis=axis, keepdims=keepdims)
        if not self.requires_grad:
            return Tensor(data)
        shape = self.data.shape

        def bwd(g: np.ndarray) -> None:
            if axis is None:
                self._accumulate(np.broadcast_to(g, shape).copy())
                return
            if not keepdims:
                axes = axis if isinstance(axis, tuple) else (axis,)
                for ax in sorted(a % len(shape) for a in axes):
                    g = np.expand_dims(g, ax)
            self._accumulate(np.broadcast_to(g, shape).copy())

        return Tensor(data, True, (self,), bwd)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        count = self.data.size if axis is None else np.prod(
            [self.data.shape[a] for a in (axis if isinstance(axis, tuple) else (axis,))]
        )
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / float(count))

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        data = self.data.reshape(shape)
        if not self.requires_grad:
            return Tensor(data)
        original = self.data.shape

        def bwd(g: np.ndarray) -> None:
            self._accumulate(g.reshape(original))

        return Tensor(data, True, (self,), bwd)

    def __getitem__(self, key) -> "Tensor":
        data = self.data[key]
        if not self.requires_grad:
            return Tensor(data)
        shape = self.data.shape

        def bwd(g: np.ndarray) -> None:
            full = np.zeros(shape, dtype=np.float64)
            np.add.at(full, key, g)  # handles repeated gather indices
            self._accumulate(full)

        return Tensor(data, True, (self,), bwd)

    def max_detached(self, axis=None, keepdims: bool = False) -> np.ndarray:
        """Max of the raw values, treated as a constant (log-sum-exp shifts)."""
        return self.data.max(axis=axis, keepdims=keepdims)


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    if not any(t.requires_grad for t in tensors):
        return Tensor(data)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bwd(g: np.ndarray) -> None:
        moved = np.moveaxis(g, axis, 0)
        for t, a, b in zip(tensors, offsets[:-1], offsets[1:]):
            t._accumulate(np.moveaxis(moved[a:b], 0, axis))

    return Tensor(data, True, tuple(tensors), bwd)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Numerically stable log softmax; the max shift is a constant by design."""
    shift = x - Tensor(x.max_detached(axis=axis, keepdims=True))
    lse = shift.exp().sum(axis=axis, keepdims=True).log()
    return shift - lse


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    return log_softmax(x, axis=axis).exp()
