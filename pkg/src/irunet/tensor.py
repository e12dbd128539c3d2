"""Dense tensors with reverse-mode automatic differentiation.

A Tensor wraps a contiguous numpy array (float32 by default, float64 for
gradient checking) and records the operation graph as it is built: each op
output keeps references to its parents plus a closure that routes the
incoming gradient back to them. Calling backward() on a scalar walks that
recorded graph once in reverse topological order and accumulates gradients
into `.grad`. The graph is per-forward-pass; nothing persists once the
output tensors are released.

Shape discipline is strict: binary ops require exactly equal shapes, the
only broadcasting allowed is a Python scalar against a tensor. Image data
uses the batch x channels x height x width layout throughout.
"""

from __future__ import annotations

from contextlib import contextmanager
from typing import Callable, Iterator, Sequence

import numpy as np

DEFAULT_DTYPE = np.float32

_grad_enabled = True
_relu_observer: Callable | None = None


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording inside the block (inference / data prep)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


@contextmanager
def observe_relu_inputs(callback: Callable) -> Iterator[None]:
    """Report every relu pre-activation array to `callback` inside the block.

    Gradient checking uses this to measure how far the probe point is from
    the relu kink, where finite differences stop being a valid oracle.
    """
    global _relu_observer
    prev = _relu_observer
    _relu_observer = callback
    try:
        yield
    finally:
        _relu_observer = prev


def grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    """N-dimensional value node of the autodiff graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if dtype is not None:
            if np.dtype(dtype) not in (np.float32, np.float64):
                raise ValueError(f"tensors are float32 or float64, got {np.dtype(dtype)}")
            arr = np.asarray(data, dtype=dtype)
        elif isinstance(data, np.ndarray) and data.dtype in (np.float32, np.float64):
            # float arrays keep their precision (the 64-bit gradient-check mode)
            arr = data
        else:
            arr = np.asarray(data, dtype=DEFAULT_DTYPE)
        self.data = np.ascontiguousarray(arr)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    # ------------------------------------------------------------------ basics

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.size != 1:
            raise ValueError(f"item() needs a scalar tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy(), requires_grad=False)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype.name}, requires_grad={self.requires_grad})"

    def accumulate_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    # ------------------------------------------------------ graph construction

    @staticmethod
    def _make(data: np.ndarray, parents: Sequence["Tensor"],
              backward: Callable[[np.ndarray], None]) -> "Tensor":
        """Wrap an op result, attaching the backward closure when recording."""
        out = Tensor.__new__(Tensor)
        out.data = data
        out.grad = None
        out._parents = ()
        out._backward = None
        out.requires_grad = _grad_enabled and any(p.requires_grad for p in parents)
        if out.requires_grad:
            out._parents = tuple(parents)
            out._backward = backward
        return out

    def _binary_operand(self, other) -> "Tensor | float":
        if isinstance(other, Tensor):
            if other.shape != self.shape:
                raise ValueError(f"shape mismatch: {self.shape} vs {other.shape}")
            if other.dtype != self.dtype:
                raise ValueError(f"dtype mismatch: {self.dtype} vs {other.dtype}")
            return other
        if isinstance(other, (int, float, np.floating, np.integer)):
            return float(other)
        return NotImplemented

    # ------------------------------------------------------------- elementwise

    def __add__(self, other):
        o = self._binary_operand(other)
        if o is NotImplemented:
            return NotImplemented
        if isinstance(o, Tensor):
            def backward(g: np.ndarray) -> None:
                if self.requires_grad:
                    self.accumulate_grad(g)
                if o.requires_grad:
                    o.accumulate_grad(g)
            return Tensor._make(self.data + o.data, (self, o), backward)

        def backward_scalar(g: np.ndarray) -> None:
            if self.requires_grad:
                self.accumulate_grad(g)
        return Tensor._make(self.data + self.dtype.type(o), (self,), backward_scalar)

    def __radd__(self, other):
        return self.__add__(other)

    def __sub__(self, other):
        o = self._binary_operand(other)
        if o is NotImplemented:
            return NotImplemented
        if isinstance(o, Tensor):
            def backward(g: np.ndarray) -> None:
                if self.requires_grad:
                    self.accumulate_grad(g)
                if o.requires_grad:
                    o.accumulate_grad(-g)
            return Tensor._make(self.data - o.data, (self, o), backward)

        def backward_scalar(g: np.ndarray) -> None:
            if self.requires_grad:
                self.accumulate_grad(g)
        return Tensor._make(self.data - self.dtype.type(o), (self,), backward_scalar)

    def __rsub__(self, other):
        return (-self).__add__(other)

    def __mul__(self, other):
        o = self._binary_operand(other)
        if o is NotImplemented:
            return NotImplemented
        if isinstance(o, Tensor):
            def backward(g: np.ndarray) -> None:
                if self.requires_grad:
                    self.accumulate_grad(g * o.data)
                if o.requires_grad:
                    o.accumulate_grad(g * self.data)
            return Tensor._make(self.data * o.data, (self, o), backward)

        c = self.dtype.type(o)

        def backward_scalar(g: np.ndarray) -> None:
            if self.requires_grad:
                self.accumulate_grad(g * c)
        return Tensor._make(self.data * c, (self,), backward_scalar)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        def backward(g: np.ndarray) -> None:
            if self.requires_grad:
                self.accumulate_grad(-g)
        return Tensor._make(-self.data, (self,), backward)

    def relu(self) -> "Tensor":
        if _relu_observer is not None:
            _relu_observer(self.data)
        out_data = np.maximum(self.data, 0)

        def backward(g: np.ndarray) -> None:
            if self.requires_grad:
                self.accumulate_grad(g * (self.data > 0))
        return Tensor._make(out_data, (self,), backward)

    def sigmoid(self) -> "Tensor":
        # two-branch form keeps exp() in the underflow-safe direction
        e = np.exp(-np.abs(self.data))
        out_data = np.where(self.data >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(self.dtype)

        def backward(g: np.ndarray) -> None:
            if self.requires_grad:
                self.accumulate_grad(g * out_data * (1.0 - out_data))
        return Tensor._make(out_data, (self,), backward)

    def abs(self) -> "Tensor":
        # subgradient at 0 is 0 (np.sign(0) == 0)
        def backward(g: np.ndarray) -> None:
            if self.requires_grad:
                self.accumulate_grad(g * np.sign(self.data))
        return Tensor._make(np.abs(self.data), (self,), backward)

    # -------------------------------------------------------------- reductions

    def _check_nonempty(self) -> None:
        if self.size == 0:
            raise ValueError("reduction over an empty tensor")

    def sum(self) -> "Tensor":
        self._check_nonempty()

        def backward(g: np.ndarray) -> None:
            if self.requires_grad:
                self.accumulate_grad(np.full_like(self.data, g.reshape(())))
        return Tensor._make(np.asarray(self.data.sum(), dtype=self.dtype), (self,), backward)

    def mean(self) -> "Tensor":
        self._check_nonempty()
        n = self.size

        def backward(g: np.ndarray) -> None:
            if self.requires_grad:
                self.accumulate_grad(np.full_like(self.data, g.reshape(()) / n))
        return Tensor._make(np.asarray(self.data.mean(), dtype=self.dtype), (self,), backward)

    def abs_mean(self) -> "Tensor":
        """Mean of absolute values, the kernel of the training loss."""
        return self.abs().mean()

    # ---------------------------------------------------------------- backward

    def backward(self) -> None:
        """Reverse-mode sweep from this scalar through the recorded graph.

        Gradients of every reachable tensor that requires grad end up in its
        `.grad` (same shape as its data); unreached tensors keep grad None,
        which callers treat as zero.
        """
        if self.size != 1:
            raise ValueError(f"backward() root must be scalar, got shape {self.shape}")

        # iterative topological order; recursion would overflow on long chains
        order: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))

        self.accumulate_grad(np.ones_like(self.data))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


def concat_channels(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate 4-D tensors along the channel axis.

    All parts must agree on batch, height and width; the backward pass
    splits the gradient back by channel ranges.
    """
    parts = list(parts)
    if not parts:
        raise ValueError("concat_channels needs at least one part")
    first = parts[0]
    for p in parts:
        if p.ndim != 4:
            raise ValueError(f"concat_channels expects 4-D tensors, got shape {p.shape}")
        if (p.shape[0], p.shape[2], p.shape[3]) != (first.shape[0], first.shape[2], first.shape[3]):
            raise ValueError(
                f"spatial mismatch in concat_channels: {first.shape} vs {p.shape}")
        if p.dtype != first.dtype:
            raise ValueError(f"dtype mismatch in concat_channels: {first.dtype} vs {p.dtype}")
    if len(parts) == 1:
        only = parts[0]

        def backward_id(g: np.ndarray) -> None:
            if only.requires_grad:
                only.accumulate_grad(g)
        return Tensor._make(only.data.copy(), (only,), backward_id)

    offsets = np.cumsum([0] + [p.shape[1] for p in parts])

    def backward(g: np.ndarray) -> None:
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                p.accumulate_grad(g[:, lo:hi])
    return Tensor._make(np.concatenate([p.data for p in parts], axis=1), parts, backward)
