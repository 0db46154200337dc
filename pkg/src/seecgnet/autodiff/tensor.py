"""Dense n-dimensional tensor participating in a recorded computation graph.

A :class:`Tensor` wraps a row-major numpy array in one of two precisions:
``float32`` (the standard training mode) or ``float64`` (the wide mode used
for gradient checking). Gradients accumulate into ``.grad`` when a backward
pass runs over the graph the tensor was recorded on.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from ..errors import ShapeError

#: Precisions a tensor may hold.
ALLOWED_DTYPES = (np.float32, np.float64)


class Tensor:
    """A real-valued array plus optional gradient buffer and graph linkage."""

    __slots__ = ("data", "grad", "requires_grad", "_node", "_graph")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
            arr = arr.astype(np.float32 if dtype is None else dtype)
        if not np.all(np.isfinite(arr)):
            raise ValueError("tensor data must be finite (no NaN/Inf)")
        self.data: np.ndarray = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        # (graph, node_id) of the most recent enrollment; stale entries from
        # earlier graphs are ignored by Graph.enroll.
        self._node: Optional[int] = None
        self._graph = None

    @classmethod
    def _from_op(cls, data: np.ndarray) -> "Tensor":
        """Fast constructor for op outputs; skips input validation."""
        t = object.__new__(cls)
        t.data = data
        t.grad = None
        t.requires_grad = False
        t._node = None
        t._graph = None
        return t

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
        if self.data.size != 1:
            raise ShapeError(f"item() requires a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        """Reset the gradient buffer; backward passes accumulate into it."""
        self.grad = None

    def accumulate_grad(self, g: np.ndarray) -> None:
        if g.shape != self.data.shape:
            raise ShapeError(f"gradient shape {g.shape} does not match tensor shape {self.shape}")
        if self.grad is None:
            self.grad = g.astype(self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self) -> None:
        """Run reverse-mode differentiation from this (scalar) tensor."""
        from .graph import GraphError  # local import avoids a cycle

        if self._graph is None:
            raise GraphError("tensor is not attached to a recorded graph")
        self._graph.backward(self)

    def detach(self) -> "Tensor":
        """A new leaf tensor sharing nothing with the recorded graph."""
        return Tensor(self.data.copy(), requires_grad=False)

    # Small arithmetic conveniences; the full op surface lives in ops.py.
    def __add__(self, other):
        from . import ops

        if isinstance(other, Tensor):
            return ops.add(self, other)
        return ops.add_const(self, float(other))

    def __sub__(self, other):
        from . import ops

        if isinstance(other, Tensor):
            return ops.sub(self, other)
        return ops.add_const(self, -float(other))

    def __mul__(self, other):
        from . import ops

        if isinstance(other, Tensor):
            return ops.mul(self, other)
        return ops.scale(self, float(other))

    __rmul__ = __mul__

    def __neg__(self):
        from . import ops

        return ops.scale(self, -1.0)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{flag})"


def as_tensor(value, dtype=None) -> Tensor:
    """Wrap ``value`` in a non-differentiable Tensor unless it already is one."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value, requires_grad=False, dtype=dtype)
