"""Minimal dense tensor type with a recorded-operation graph.

The tape records operations during a forward pass run inside a
``with Graph():`` block; ``Graph.backward`` (or ``Tensor.backward``) then
replays it in reverse to populate parameter gradients.
"""

from .gradcheck import GradCheckReport, grad_check
from .graph import Graph, Node, active_graph, backward
from .tensor import Tensor, as_tensor
from . import ops

__all__ = [
    "Graph",
    "GradCheckReport",
    "Node",
    "Tensor",
    "active_graph",
    "as_tensor",
    "backward",
    "grad_check",
    "ops",
]
