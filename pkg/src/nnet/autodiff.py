"""Reverse-mode differentiation over numpy arrays.

Every op returns a Tensor that remembers its parents and a closure mapping the
output gradient to parent gradients. ``Tensor.backward`` walks the recorded graph
in reverse topological order. Recording is skipped inside ``no_grad()`` and for
ops whose inputs do not require gradients.
"""

import logging
from collections.abc import Callable, Iterator, Sequence
from contextlib import contextmanager
from typing import Any

import numpy as np

from src.state.errors import ContractError

logger = logging.getLogger(__name__)

BackwardFn = Callable[[np.ndarray], Sequence[np.ndarray | None]]

_GRAD_ENABLED = True


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording inside the block."""
    global _GRAD_ENABLED
    previous = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = previous


class Tensor:
    """An ndarray value plus the trace needed to differentiate through it."""

    __slots__ = ("_backward", "_parents", "grad", "name", "requires_grad", "value")

    def __init__(
        self,
        value: Any,
        *,
        requires_grad: bool = False,
        name: str = "",
        parents: tuple["Tensor", ...] = (),
        backward: BackwardFn | None = None,
    ) -> None:
        self.value = np.asarray(value)
        self.requires_grad = requires_grad
        self.name = name
        self.grad: np.ndarray | None = None
        self._parents = parents
        self._backward = backward

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, name={self.name!r}, requires_grad={self.requires_grad})"

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.value.shape)

    @property
    def ndim(self) -> int:
        return int(self.value.ndim)

    def item(self) -> float:
        return float(self.value)

    def backward(self, grad: np.ndarray | None = None) -> None:
        """Accumulate d(self)/d(leaf) into ``.grad`` of every leaf that requires it.

        Raises:
            ContractError: If the tensor was not produced by a recorded op.
        """
        if self._backward is None:
            msg = f"backward() on {self!r}, which has no recorded trace"
            raise ContractError(msg)
        if grad is None:
            if self.value.size != 1:
                msg = f"backward() without an explicit gradient needs a scalar, got shape {self.shape}"
                raise ContractError(msg)
            grad = np.ones_like(self.value)
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
            stack.extend((p, False) for p in node._parents if p.requires_grad)
        grads: dict[int, np.ndarray] = {id(self): np.asarray(grad, dtype=self.value.dtype)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g), strict=True):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg

    # Operator sugar
    def __add__(self, other: Any) -> "Tensor":
        return add(self, as_tensor(other))

    def __radd__(self, other: Any) -> "Tensor":
        return add(as_tensor(other), self)

    def __sub__(self, other: Any) -> "Tensor":
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other: Any) -> "Tensor":
        return add(as_tensor(other), neg(self))

    def __mul__(self, other: Any) -> "Tensor":
        return mul(self, as_tensor(other))

    def __rmul__(self, other: Any) -> "Tensor":
        return mul(as_tensor(other), self)

    def __neg__(self) -> "Tensor":
        return neg(self)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __getitem__(self, key: Any) -> "Tensor":
        return getitem(self, key)


def as_tensor(value: Any) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def parameter(value: np.ndarray, name: str = "") -> Tensor:
    """A leaf that collects gradients."""
    return Tensor(value, requires_grad=True, name=name)


def record(value: np.ndarray, parents: tuple[Tensor, ...], backward: BackwardFn) -> Tensor:
    """Wrap an op result, attaching the trace only when something upstream needs gradients."""
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        return Tensor(value, requires_grad=True, parents=parents, backward=backward)
    return Tensor(value)


def unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# --- Elementwise ---


def add(a: Tensor, b: Tensor) -> Tensor:
    return record(a.value + b.value, (a, b), lambda g: (unbroadcast(g, a.shape), unbroadcast(g, b.shape)))


def neg(a: Tensor) -> Tensor:
    return record(-a.value, (a,), lambda g: (-g,))


def mul(a: Tensor, b: Tensor) -> Tensor:
    return record(
        a.value * b.value,
        (a, b),
        lambda g: (unbroadcast(g * b.value, a.shape), unbroadcast(g * a.value, b.shape)),
    )


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.value)
    return record(out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    return record(np.log(a.value), (a,), lambda g: (g / a.value,))


def floor_log(a: Tensor, eps: float) -> Tensor:
    """log(max(a, eps)); the gradient is zero where the floor is active."""
    active = a.value > eps
    safe = np.where(active, a.value, eps)
    return record(np.log(safe), (a,), lambda g: (np.where(active, g / safe, 0.0),))


def sigmoid(a: Tensor) -> Tensor:
    out = 1.0 / (1.0 + np.exp(-a.value))
    return record(out, (a,), lambda g: (g * out * (1.0 - out),))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.value)
    return record(out, (a,), lambda g: (g * (1.0 - out * out),))


def absolute(a: Tensor) -> Tensor:
    return record(np.abs(a.value), (a,), lambda g: (g * np.sign(a.value),))


def square(a: Tensor) -> Tensor:
    return record(a.value * a.value, (a,), lambda g: (2.0 * g * a.value,))


# --- Reductions and shape ---


def total(a: Tensor, axis: int | tuple[int, ...] | None = None) -> Tensor:
    """Sum over ``axis`` (all axes when None)."""

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return record(np.sum(a.value, axis=axis), (a,), backward)


def mean(a: Tensor, axis: int | tuple[int, ...] | None = None) -> Tensor:
    count = a.value.size if axis is None else int(np.prod([a.shape[i] for i in np.atleast_1d(axis)]))
    return mul(total(a, axis), Tensor(np.asarray(1.0 / count, dtype=a.value.dtype)))


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    return record(a.value.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def concat(parts: Sequence[Tensor], axis: int = -1) -> Tensor:
    sizes = [p.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def backward(g: np.ndarray) -> list[np.ndarray]:
        return list(np.split(g, splits, axis=axis))

    return record(np.concatenate([p.value for p in parts], axis=axis), tuple(parts), backward)


def getitem(a: Tensor, key: Any) -> Tensor:
    """Basic or advanced indexing; repeated indices accumulate in the gradient."""

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        out = np.zeros_like(a.value)
        np.add.at(out, key, g)
        return (out,)

    return record(a.value[key], (a,), backward)


# --- Linear algebra ---


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """(..., K) @ (K, N) -> (..., N)."""
    if b.ndim != 2 or a.shape[-1] != b.shape[0]:
        msg = f"matmul shape mismatch: {a.shape} @ {b.shape}"
        raise ContractError(msg)

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        flat_a = a.value.reshape(-1, a.shape[-1])
        flat_g = g.reshape(-1, g.shape[-1])
        return g @ b.value.T, flat_a.T @ flat_g

    return record(a.value @ b.value, (a, b), backward)


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    return add(matmul(x, weight), bias)


# --- Normalized exponentials ---


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.value - a.value.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return record(out, (a,), backward)


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.value - a.value.max(axis=axis, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return record(out, (a,), backward)


def pick(a: Tensor, labels: np.ndarray) -> Tensor:
    """Select a[..., labels[...]] along the last axis."""
    index = (*np.indices(labels.shape, sparse=True), labels)
    return getitem(a, index)


def power(a: Tensor, exponent: float) -> Tensor:
    out = a.value**exponent
    return record(out, (a,), lambda g: (g * exponent * a.value ** (exponent - 1.0),))


def where(mask: np.ndarray, a: Tensor, b: Tensor) -> Tensor:
    """Elementwise select; ``mask`` is a constant."""
    return record(
        np.where(mask, a.value, b.value),
        (a, b),
        lambda g: (unbroadcast(np.where(mask, g, 0.0), a.shape), unbroadcast(np.where(mask, 0.0, g), b.shape)),
    )
