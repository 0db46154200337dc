"""Differentiable operations over :class:`~seecgnet.autodiff.tensor.Tensor`.

Every function computes its forward value with numpy and, when a graph is
recording on the current thread, appends a node whose closure produces the
vector-Jacobian products for the operands that need gradients. With no
active graph the functions are plain numpy computations (evaluation mode).

Shape rules are strict: binary elementwise ops require identical shapes, and
the only implicit broadcast anywhere is multiplying a tensor by a Python
scalar. Padding is zero-padding throughout.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from ..errors import ShapeError
from .graph import Graph, active_graph
from .tensor import Tensor

__all__ = [
    "add", "sub", "mul", "scale", "add_const", "relu", "sigmoid", "log", "exp",
    "pow_const", "conv2d", "conv1d", "linear", "mean_axis", "global_avg_pool",
    "avg_pool1d", "reshape", "permute", "concat", "softmax", "log_softmax",
    "take_classes", "scale_channels", "batch_norm",
]


def _record(op: str, out_data: np.ndarray, operands: Sequence[Tensor], vjp_builder):
    """Wrap ``out_data`` and record ``op`` if a graph is active.

    ``vjp_builder(needs)`` is called only when recording, with one bool per
    operand saying whether its gradient will be consumed; it returns the vjp
    closure. Keeping closure construction behind the recording check keeps
    evaluation mode free of saved state.
    """
    out = Tensor._from_op(out_data)
    g = active_graph()
    if g is not None:
        ids = tuple(g.enroll(t) for t in operands)
        needs = tuple(g.nodes[i].needs_grad for i in ids)
        g.record(op, out, ids, vjp_builder(needs))
    return out


def _check_same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: operand shapes {a.shape} and {b.shape} differ")
    if a.dtype != b.dtype:
        raise ShapeError(f"{op}: operand dtypes {a.dtype} and {b.dtype} differ")


# ---------------------------------------------------------------------------
# elementwise
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape("add", a, b)
    return _record("add", a.data + b.data, (a, b),
                   lambda needs: lambda g: (g if needs[0] else None,
                                            g if needs[1] else None))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape("sub", a, b)
    return _record("sub", a.data - b.data, (a, b),
                   lambda needs: lambda g: (g if needs[0] else None,
                                            -g if needs[1] else None))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape("mul", a, b)

    def build(needs):
        ad, bd = a.data, b.data
        return lambda g: (g * bd if needs[0] else None,
                          g * ad if needs[1] else None)

    return _record("mul", a.data * b.data, (a, b), build)


def scale(a: Tensor, c: float) -> Tensor:
    """Multiply by a Python scalar (the one permitted broadcast)."""
    c = float(c)
    return _record("scale", a.data * c, (a,),
                   lambda needs: lambda g: (g * c,))


def add_const(a: Tensor, c: float) -> Tensor:
    return _record("add_const", a.data + float(c), (a,),
                   lambda needs: lambda g: (g,))


def relu(a: Tensor) -> Tensor:
    out_data = np.maximum(a.data, 0)

    def build(needs):
        mask = a.data > 0
        return lambda g: (g * mask,)

    return _record("relu", out_data, (a,), build)


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    # Split by sign so exp never overflows.
    out_data = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                        np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    out_data = out_data.astype(x.dtype, copy=False)

    def build(needs):
        s = out_data
        return lambda g: (g * s * (1.0 - s),)

    return _record("sigmoid", out_data, (a,), build)


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0):
        raise ValueError("log: input must be strictly positive")

    def build(needs):
        x = a.data
        return lambda g: (g / x,)

    return _record("log", np.log(a.data), (a,), build)


def exp(a: Tensor) -> Tensor:
    out_data = np.exp(a.data)

    def build(needs):
        return lambda g: (g * out_data,)

    return _record("exp", out_data, (a,), build)


def pow_const(a: Tensor, p: float) -> Tensor:
    """Elementwise ``a ** p`` for a constant exponent ``p >= 0``.

    The derivative at 0 is clamped to 0 for p > 1 (its true limit) and the
    p == 0 / p == 1 cases are handled exactly, so focal-style ``(1-p)**gamma``
    factors stay finite even when a probability saturates.
    """
    p = float(p)
    if p < 0:
        raise ValueError("pow_const: exponent must be non-negative")
    out_data = a.data ** p

    def build(needs):
        x = a.data

        def vjp(g):
            if p == 0.0:
                return (np.zeros_like(g),)
            if p == 1.0:
                return (g,)
            d = np.where(x > 0, x ** (p - 1.0), 0.0).astype(x.dtype, copy=False)
            return (g * (p * d),)

        return vjp

    return _record("pow_const", out_data, (a,), build)


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------

def _conv2d_checks(x: Tensor, w: Tensor, b: Tensor, stride, padding):
    if x.ndim != 4:
        raise ShapeError(f"conv2d: input must be 4-d (N,C,T,L), got {x.shape}")
    if w.ndim != 4:
        raise ShapeError(f"conv2d: weight must be 4-d (C_out,C_in,kt,kl), got {w.shape}")
    st, sl = int(stride[0]), int(stride[1])
    pt, pl = int(padding[0]), int(padding[1])
    if st < 1 or sl < 1:
        raise ShapeError(f"conv2d: stride must be positive, got {(st, sl)}")
    if pt < 0 or pl < 0:
        raise ShapeError(f"conv2d: padding must be non-negative, got {(pt, pl)}")
    n, c_in, t, l = x.shape
    c_out, wc_in, kt, kl = w.shape
    if wc_in != c_in:
        raise ShapeError(
            f"conv2d: weight in-channels {wc_in} do not match input channels {c_in} (axis 1)")
    if b.shape != (c_out,):
        raise ShapeError(f"conv2d: bias shape {b.shape} must be ({c_out},) (axis 0)")
    if kt > t + 2 * pt:
        raise ShapeError(f"conv2d: kernel extent {kt} exceeds padded input {t + 2 * pt} (axis 2)")
    if kl > l + 2 * pl:
        raise ShapeError(f"conv2d: kernel extent {kl} exceeds padded input {l + 2 * pl} (axis 3)")
    return (st, sl), (pt, pl)


def _im2col(xp: np.ndarray, kt: int, kl: int, st: int, sl: int, t_out: int, l_out: int):
    """(N*T'*L', C*kt*kl) patch matrix of the padded input ``xp``."""
    n, c = xp.shape[0], xp.shape[1]
    s0, s1, s2, s3 = xp.strides
    win = np.lib.stride_tricks.as_strided(
        xp,
        shape=(n, t_out, l_out, c, kt, kl),
        strides=(s0, s2 * st, s3 * sl, s1, s2, s3),
        writeable=False,
    )
    return win.reshape(n * t_out * l_out, c * kt * kl)


def _conv2d_raw(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride, padding):
    (st, sl), (pt, pl) = stride, padding
    n, c_in, t, l = x.shape
    c_out, _, kt, kl = w.shape
    t_out = (t + 2 * pt - kt) // st + 1
    l_out = (l + 2 * pl - kl) // sl + 1
    xp = np.pad(x, ((0, 0), (0, 0), (pt, pt), (pl, pl))) if (pt or pl) else x
    cols = _im2col(xp, kt, kl, st, sl, t_out, l_out)
    out = cols @ w.reshape(c_out, -1).T + b
    out = out.reshape(n, t_out, l_out, c_out).transpose(0, 3, 1, 2)
    return np.ascontiguousarray(out), cols


def _conv2d_input_grad(g: np.ndarray, w: np.ndarray, x_shape, stride, padding):
    (st, sl), (pt, pl) = stride, padding
    n, c_in, t, l = x_shape
    c_out, _, kt, kl = w.shape
    t_out, l_out = g.shape[2], g.shape[3]
    # (N, T', L', C_in, kt, kl): per-position contribution of each kernel tap.
    full = np.tensordot(g, w, axes=([1], [0]))
    gxp = np.zeros((n, c_in, t + 2 * pt, l + 2 * pl), dtype=g.dtype)
    for a in range(kt):
        for bb in range(kl):
            gxp[:, :, a:a + t_out * st:st, bb:bb + l_out * sl:sl] += \
                full[:, :, :, :, a, bb].transpose(0, 3, 1, 2)
    if pt or pl:
        return gxp[:, :, pt:pt + t, pl:pl + l]
    return gxp


def conv2d(x: Tensor, w: Tensor, b: Tensor, stride=(1, 1), padding=(0, 0)) -> Tensor:
    """2-d cross-correlation over (time, lead) with zero padding.

    Output extent on each spatial axis is ``(extent + 2*pad - k) // stride + 1``;
    each output scalar is the kernel dotted with its receptive field plus bias.
    """
    stride, padding = _conv2d_checks(x, w, b, stride, padding)
    out_data, cols = _conv2d_raw(x.data, w.data, b.data, stride, padding)

    def build(needs):
        w_data, x_shape = w.data, x.shape
        saved_cols = cols if needs[1] else None

        def vjp(g):
            gx = gw = gb = None
            if needs[0]:
                gx = _conv2d_input_grad(g, w_data, x_shape, stride, padding)
            if needs[1]:
                c_out = g.shape[1]
                gmat = g.transpose(0, 2, 3, 1).reshape(-1, c_out)
                gw = (gmat.T @ saved_cols).reshape(w_data.shape)
            if needs[2]:
                gb = g.sum(axis=(0, 2, 3))
            return (gx, gw, gb)

        return vjp

    return _record("conv2d", out_data, (x, w, b), build)


def conv1d(x: Tensor, w: Tensor, b: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """1-d cross-correlation; same contract as :func:`conv2d` on one axis."""
    if x.ndim != 3:
        raise ShapeError(f"conv1d: input must be 3-d (N,C,T), got {x.shape}")
    if w.ndim != 3:
        raise ShapeError(f"conv1d: weight must be 3-d (C_out,C_in,k), got {w.shape}")
    x4 = Tensor._from_op(x.data[:, :, :, None])
    w4 = Tensor._from_op(w.data[:, :, :, None])
    stride2, padding2 = _conv2d_checks(x4, w4, b, (stride, 1), (padding, 0))
    out_data, cols = _conv2d_raw(x4.data, w4.data, b.data, stride2, padding2)
    out_data = out_data[:, :, :, 0]

    def build(needs):
        w_data, x_shape = w.data, x4.shape
        saved_cols = cols if needs[1] else None

        def vjp(g):
            g4 = g[:, :, :, None]
            gx = gw = gb = None
            if needs[0]:
                gx = _conv2d_input_grad(g4, w_data[:, :, :, None], x_shape,
                                        stride2, padding2)[:, :, :, 0]
            if needs[1]:
                c_out = g4.shape[1]
                gmat = g4.transpose(0, 2, 3, 1).reshape(-1, c_out)
                gw = (gmat.T @ saved_cols).reshape(w_data.shape)
            if needs[2]:
                gb = g.sum(axis=(0, 2))
            return (gx, gw, gb)

        return vjp

    return _record("conv1d", out_data, (x, w, b), build)


# ---------------------------------------------------------------------------
# linear / reductions
# ---------------------------------------------------------------------------

def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Affine map ``x @ w.T + b`` for x:(N,F_in), w:(F_out,F_in), b:(F_out,)."""
    if x.ndim != 2 or w.ndim != 2:
        raise ShapeError(f"linear: need 2-d input and weight, got {x.shape} and {w.shape}")
    if x.shape[1] != w.shape[1]:
        raise ShapeError(
            f"linear: input features {x.shape[1]} do not match weight features {w.shape[1]} (axis 1)")
    if b.shape != (w.shape[0],):
        raise ShapeError(f"linear: bias shape {b.shape} must be ({w.shape[0]},)")
    out_data = x.data @ w.data.T + b.data

    def build(needs):
        xd, wd = x.data, w.data
        return lambda g: (g @ wd if needs[0] else None,
                          g.T @ xd if needs[1] else None,
                          g.sum(axis=0) if needs[2] else None)

    return _record("linear", out_data, (x, w, b), build)


def mean_axis(x: Tensor, axis: int) -> Tensor:
    """Mean over one axis; the gradient spreads 1/extent to contributors."""
    axis = int(axis)
    if axis < 0 or axis >= x.ndim:
        raise ShapeError(f"mean_axis: axis {axis} out of range for shape {x.shape}")
    extent = x.shape[axis]
    if extent == 0:
        raise ShapeError("mean_axis: cannot reduce an empty axis")
    out_data = x.data.mean(axis=axis)

    def build(needs):
        shape = x.shape

        def vjp(g):
            ge = np.expand_dims(g, axis) / extent
            return (np.broadcast_to(ge, shape),)

        return vjp

    return _record("mean_axis", out_data, (x,), build)


def global_avg_pool(x: Tensor) -> Tensor:
    """Mean over all spatial axes of (N, C, spatial...) down to (N, C)."""
    if x.ndim < 3:
        raise ShapeError(f"global_avg_pool: need at least one spatial axis, got {x.shape}")
    spatial_axes = tuple(range(2, x.ndim))
    count = int(np.prod([x.shape[a] for a in spatial_axes]))
    if count == 0:
        raise ShapeError("global_avg_pool: empty spatial extent")
    out_data = x.data.mean(axis=spatial_axes)

    def build(needs):
        shape = x.shape
        expander = (slice(None), slice(None)) + (None,) * len(spatial_axes)

        def vjp(g):
            return (np.broadcast_to(g[expander] / count, shape),)

        return vjp

    return _record("global_avg_pool", out_data, (x,), build)


def avg_pool1d(x: Tensor, window: int, stride: int) -> Tensor:
    """Sliding-window mean along the last axis of (N, C, T)."""
    if x.ndim != 3:
        raise ShapeError(f"avg_pool1d: input must be 3-d (N,C,T), got {x.shape}")
    window, stride = int(window), int(stride)
    n, c, t = x.shape
    if window < 1 or window > t:
        raise ShapeError(f"avg_pool1d: window {window} outside [1, {t}]")
    if stride < 1:
        raise ShapeError(f"avg_pool1d: stride must be positive, got {stride}")
    t_out = (t - window) // stride + 1
    s0, s1, s2 = x.data.strides
    win = np.lib.stride_tricks.as_strided(
        x.data, shape=(n, c, t_out, window), strides=(s0, s1, s2 * stride, s2),
        writeable=False)
    out_data = win.mean(axis=3)

    def build(needs):
        def vjp(g):
            gx = np.zeros((n, c, t), dtype=g.dtype)
            gw = g / window
            for a in range(window):
                gx[:, :, a:a + t_out * stride:stride] += gw
            return (gx,)

        return vjp

    return _record("avg_pool1d", out_data, (x,), build)


# ---------------------------------------------------------------------------
# shape manipulation
# ---------------------------------------------------------------------------

def reshape(x: Tensor, new_shape) -> Tensor:
    new_shape = tuple(int(s) for s in new_shape)
    if int(np.prod(new_shape)) != x.size:
        raise ShapeError(f"reshape: cannot reshape {x.shape} ({x.size} elements) to {new_shape}")
    out_data = x.data.reshape(new_shape)

    def build(needs):
        old = x.shape
        return lambda g: (g.reshape(old),)

    return _record("reshape", out_data, (x,), build)


def permute(x: Tensor, axes) -> Tensor:
    axes = tuple(int(a) for a in axes)
    if sorted(axes) != list(range(x.ndim)):
        raise ShapeError(f"permute: {axes} is not a permutation of axes of {x.shape}")
    out_data = np.ascontiguousarray(x.data.transpose(axes))

    def build(needs):
        inverse = tuple(int(i) for i in np.argsort(axes))
        return lambda g: (g.transpose(inverse),)

    return _record("permute", out_data, (x,), build)


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    if not tensors:
        raise ShapeError("concat: need at least one operand")
    axis = int(axis)
    first = tensors[0]
    if axis < 0 or axis >= first.ndim:
        raise ShapeError(f"concat: axis {axis} out of range for shape {first.shape}")
    for t in tensors[1:]:
        if t.ndim != first.ndim:
            raise ShapeError(f"concat: rank mismatch {first.shape} vs {t.shape}")
        for ax in range(first.ndim):
            if ax != axis and t.shape[ax] != first.shape[ax]:
                raise ShapeError(
                    f"concat: shapes {first.shape} and {t.shape} differ on non-concat axis {ax}")
    out_data = np.concatenate([t.data for t in tensors], axis=axis)

    def build(needs):
        sizes = [t.shape[axis] for t in tensors]
        offsets = np.cumsum([0] + sizes)

        def vjp(g):
            pieces = []
            for i in range(len(sizes)):
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(int(offsets[i]), int(offsets[i + 1]))
                pieces.append(g[tuple(sl)] if needs[i] else None)
            return tuple(pieces)

        return vjp

    return _record("concat", out_data, tuple(tensors), build)


# ---------------------------------------------------------------------------
# softmax family and row gathers
# ---------------------------------------------------------------------------

def _log_softmax_raw(x: np.ndarray) -> np.ndarray:
    z = x - x.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def log_softmax(x: Tensor) -> Tensor:
    """Row-wise log-probabilities, computed with max-subtraction."""
    if x.ndim != 2 or x.shape[1] < 1:
        raise ShapeError(f"log_softmax: input must be (N, K) with K >= 1, got {x.shape}")
    out_data = _log_softmax_raw(x.data)

    def build(needs):
        def vjp(g):
            return (g - np.exp(out_data) * g.sum(axis=1, keepdims=True),)

        return vjp

    return _record("log_softmax", out_data, (x,), build)


def softmax(x: Tensor) -> Tensor:
    """Row-wise normalized exponential; rows sum to 1."""
    if x.ndim != 2 or x.shape[1] < 1:
        raise ShapeError(f"softmax: input must be (N, K) with K >= 1, got {x.shape}")
    out_data = np.exp(_log_softmax_raw(x.data))

    def build(needs):
        s = out_data

        def vjp(g):
            return (s * (g - (g * s).sum(axis=1, keepdims=True)),)

        return vjp

    return _record("softmax", out_data, (x,), build)


def take_classes(x: Tensor, classes: np.ndarray) -> Tensor:
    """Gather one column per row: out[n] = x[n, classes[n]]."""
    if x.ndim != 2:
        raise ShapeError(f"take_classes: input must be (N, K), got {x.shape}")
    idx = np.asarray(classes)
    if idx.shape != (x.shape[0],):
        raise ShapeError(f"take_classes: index shape {idx.shape} must be ({x.shape[0]},)")
    if not np.issubdtype(idx.dtype, np.integer):
        raise ValueError("take_classes: class indices must be integers")
    if idx.min(initial=0) < 0 or idx.max(initial=0) >= x.shape[1]:
        raise ValueError(
            f"take_classes: class index out of range [0, {x.shape[1]}): {idx.min()}..{idx.max()}")
    rows = np.arange(x.shape[0])
    out_data = x.data[rows, idx]

    def build(needs):
        shape = x.shape

        def vjp(g):
            gx = np.zeros(shape, dtype=g.dtype)
            gx[rows, idx] = g
            return (gx,)

        return vjp

    return _record("take_classes", out_data, (x,), build)


def scale_channels(x: Tensor, gate: Tensor) -> Tensor:
    """Multiply channel c of (N, C, spatial...) by gate[n, c]."""
    if x.ndim < 3:
        raise ShapeError(f"scale_channels: input must have spatial axes, got {x.shape}")
    if gate.shape != x.shape[:2]:
        raise ShapeError(
            f"scale_channels: gate shape {gate.shape} must be {x.shape[:2]} (batch, channel)")
    expander = (slice(None), slice(None)) + (None,) * (x.ndim - 2)
    out_data = x.data * gate.data[expander]

    def build(needs):
        xd, gd = x.data, gate.data
        spatial_axes = tuple(range(2, x.ndim))

        def vjp(g):
            gx = g * gd[expander] if needs[0] else None
            ggate = (g * xd).sum(axis=spatial_axes) if needs[1] else None
            return (gx, ggate)

        return vjp

    return _record("scale_channels", out_data, (x, gate), build)


# ---------------------------------------------------------------------------
# batch normalization (fused node; differentiable through batch statistics)
# ---------------------------------------------------------------------------

def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Per-channel normalization of (N, C, spatial...).

    Training mode normalizes by batch statistics, updates the running buffers
    in place (unbiased variance, factor ``momentum``), and differentiates
    through the statistics. Evaluation mode uses the running buffers as
    constants.
    """
    if x.ndim < 2:
        raise ShapeError(f"batch_norm: input must be (N, C, ...), got {x.shape}")
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(
            f"batch_norm: gamma/beta shapes {gamma.shape}/{beta.shape} must be ({c},)")
    reduce_axes = (0,) + tuple(range(2, x.ndim))
    count = int(np.prod([x.shape[a] for a in reduce_axes]))
    expander = (None, slice(None)) + (None,) * (x.ndim - 2)
    gb = gamma.data[expander]
    bb = beta.data[expander]

    if training:
        if count < 2:
            raise ShapeError(
                "batch_norm: training mode needs at least 2 values per channel "
                f"(batch x spatial), got {count}")
        mu = x.data.mean(axis=reduce_axes)
        var = x.data.var(axis=reduce_axes)
        inv_std = 1.0 / np.sqrt(var + eps)
        x_hat = (x.data - mu[expander]) * inv_std[expander]
        out_data = gb * x_hat + bb
        var_unbiased = var * (count / (count - 1))
        running_mean *= (1.0 - momentum)
        running_mean += momentum * mu
        running_var *= (1.0 - momentum)
        running_var += momentum * var_unbiased

        def build(needs):
            def vjp(g):
                dgamma = (g * x_hat).sum(axis=reduce_axes) if needs[1] else None
                dbeta = g.sum(axis=reduce_axes) if needs[2] else None
                dx = None
                if needs[0]:
                    dxhat = g * gb
                    m1 = dxhat.mean(axis=reduce_axes)[expander]
                    m2 = (dxhat * x_hat).mean(axis=reduce_axes)[expander]
                    dx = inv_std[expander] * (dxhat - m1 - x_hat * m2)
                return (dx, dgamma, dbeta)

            return vjp

    else:
        inv_std = 1.0 / np.sqrt(running_var + eps)
        x_hat = (x.data - running_mean[expander]) * inv_std[expander]
        x_hat = x_hat.astype(x.dtype, copy=False)
        out_data = gb * x_hat + bb

        def build(needs):
            def vjp(g):
                dgamma = (g * x_hat).sum(axis=reduce_axes) if needs[1] else None
                dbeta = g.sum(axis=reduce_axes) if needs[2] else None
                dx = g * gb * inv_std[expander].astype(g.dtype) if needs[0] else None
                return (dx, dgamma, dbeta)

            return vjp

    return _record("batch_norm", out_data.astype(x.dtype, copy=False), (x, gamma, beta), build)
