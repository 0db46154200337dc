"""Recorded-operation tape for reverse-mode differentiation.

Operations append nodes to the active graph in execution order, so insertion
order is already a topological order: every operand id refers to an earlier
node, and replaying the tape in reverse visits each node exactly once. The
graph is rebuilt on every forward pass (define-by-run); recording is
per-thread, so distinct threads may each drive their own graph.
"""

from __future__ import annotations

import threading
from typing import Callable, Optional, Sequence

import numpy as np

from ..errors import GraphError
from .tensor import Tensor

_local = threading.local()


def active_graph() -> Optional["Graph"]:
    """The graph currently recording on this thread, if any."""
    return getattr(_local, "graph", None)


class Node:
    """One recorded operation: operand node ids plus a vector-Jacobian product.

    Leaf nodes (``vjp is None``) reference the tensor whose ``.grad`` buffer
    receives accumulated gradients.
    """

    __slots__ = ("op", "inputs", "vjp", "tensor", "needs_grad")

    def __init__(
        self,
        op: str,
        inputs: tuple[int, ...],
        vjp: Optional[Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]],
        tensor: Optional[Tensor] = None,
        needs_grad: bool = False,
    ):
        self.op = op
        self.inputs = inputs
        self.vjp = vjp
        self.tensor = tensor
        self.needs_grad = needs_grad


class Graph:
    """Append-only tape of :class:`Node` records.

    Use as a context manager to make it the active recording target::

        with Graph() as g:
            loss = model_loss(...)
        g.backward(loss)
    """

    def __init__(self):
        self.nodes: list[Node] = []
        self._consumed = False

    def __enter__(self) -> "Graph":
        if active_graph() is not None:
            raise GraphError("a graph is already recording on this thread")
        _local.graph = self
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _local.graph = None

    def __len__(self) -> int:
        return len(self.nodes)

    def op_names(self) -> list[str]:
        """Names of recorded operations in insertion order (leaves excluded)."""
        return [n.op for n in self.nodes if n.vjp is not None]

    def enroll(self, t: Tensor) -> int:
        """Node id of ``t`` on this graph, recording a leaf on first use."""
        if t._graph is self and t._node is not None:
            return t._node
        node_id = len(self.nodes)
        self.nodes.append(Node("leaf", (), None, tensor=t, needs_grad=t.requires_grad))
        t._graph = self
        t._node = node_id
        return node_id

    def record(
        self,
        op: str,
        out: Tensor,
        input_ids: tuple[int, ...],
        vjp: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]],
    ) -> None:
        needs = any(self.nodes[i].needs_grad for i in input_ids)
        node_id = len(self.nodes)
        self.nodes.append(Node(op, input_ids, vjp, needs_grad=needs))
        out._graph = self
        out._node = node_id

    def backward(self, loss: Tensor) -> None:
        """Populate ``.grad`` of every parameter reachable from ``loss``.

        Gradients accumulate (+=) into existing buffers; call ``zero_grad``
        on the parameters between steps. The tape can be played backward only
        once per recording.
        """
        if not self.nodes:
            raise GraphError("backward on an empty graph")
        if self._consumed:
            raise GraphError("backward already ran on this graph; re-record the forward pass")
        if loss._graph is not self or loss._node is None:
            raise GraphError("loss tensor was not recorded on this graph")
        if loss.data.size != 1:
            raise GraphError(f"backward requires a scalar loss, got shape {loss.shape}")

        grads: list[Optional[np.ndarray]] = [None] * len(self.nodes)
        grads[loss._node] = np.ones_like(loss.data)
        for node_id in range(len(self.nodes) - 1, -1, -1):
            g = grads[node_id]
            if g is None:
                continue
            node = self.nodes[node_id]
            if node.vjp is None:
                if node.tensor is not None and node.tensor.requires_grad:
                    node.tensor.accumulate_grad(g)
                continue
            if not node.needs_grad:
                continue
            for input_id, gin in zip(node.inputs, node.vjp(g)):
                if gin is None or not self.nodes[input_id].needs_grad:
                    continue
                if grads[input_id] is None:
                    grads[input_id] = gin
                else:
                    grads[input_id] = grads[input_id] + gin
            grads[node_id] = None  # free as we go
        self._consumed = True
        # Drop saved forward state held by the vjp closures.
        for node in self.nodes:
            node.vjp = None


def backward(loss: Tensor, graph: Optional[Graph] = None) -> None:
    """Functional form of :meth:`Graph.backward`."""
    g = graph if graph is not None else loss._graph
    if g is None:
        raise GraphError("tensor is not attached to a recorded graph")
    g.backward(loss)
