"""Central finite-difference verification of recorded gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .graph import Graph
from .tensor import Tensor


@dataclass
class GradCheckReport:
    """Worst-case relative error between analytic and numeric gradients."""

    max_relative_error: float
    worst_parameter: str
    per_parameter_errors: dict[str, float] = field(default_factory=dict)

    def passed(self, tolerance: float = 1e-4) -> bool:
        return self.max_relative_error < tolerance


def _relative_error(a: float, n: float) -> float:
    return abs(a - n) / max(abs(a), abs(n), 1e-8)


def grad_check(
    forward_fn: Callable[[], Tensor],
    parameters: Mapping[str, Tensor],
    epsilon: float = 1e-4,
) -> GradCheckReport:
    """Compare recorded gradients of ``forward_fn`` against central differences.

    ``forward_fn`` must be deterministic and return a scalar tensor computed
    from the given parameter tensors; determinism is verified by evaluating
    it twice. For each parameter scalar the numeric gradient is
    ``(f(theta+eps) - f(theta-eps)) / (2 eps)`` and the relative error is
    ``|a - n| / max(|a|, |n|, 1e-8)``. Run the model in wide (float64)
    precision for meaningful tolerances.
    """
    if epsilon <= 0:
        raise ValueError("grad_check: epsilon must be positive")
    if not parameters:
        raise ValueError("grad_check: no parameters to check")

    base = float(forward_fn().item())
    if float(forward_fn().item()) != base:
        raise RuntimeError("grad_check: forward_fn is not deterministic")

    for p in parameters.values():
        p.zero_grad()
    with Graph() as g:
        loss = forward_fn()
    g.backward(loss)

    per_param: dict[str, float] = {}
    for name, p in parameters.items():
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        worst = 0.0
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + epsilon
            f_plus = float(forward_fn().item())
            flat[i] = original - epsilon
            f_minus = float(forward_fn().item())
            flat[i] = original
            numeric = (f_plus - f_minus) / (2.0 * epsilon)
            worst = max(worst, _relative_error(float(analytic.reshape(-1)[i]), numeric))
        per_param[name] = worst

    worst_name = max(per_param, key=per_param.get)
    return GradCheckReport(
        max_relative_error=per_param[worst_name],
        worst_parameter=worst_name,
        per_parameter_errors=per_param,
    )
