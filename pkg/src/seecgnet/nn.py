"""Neural building blocks: convolutions, batch normalization, channel
attention, and pre-activation residual blocks in 2-d and 1-d variants.

Every layer draws its parameters from the generator handed to it, so a model
assembled in a fixed order from a seeded generator is bitwise reproducible.
Layers expose ``named_parameters`` (trainable tensors) and, where relevant,
``named_buffers`` (running statistics).
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor, ops
from .errors import ShapeError


def _uniform_fan_in(rng: np.random.Generator, shape, fan_in: int, dtype) -> Tensor:
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape).astype(dtype), requires_grad=True)


def _zeros(shape, dtype) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=True)


class Conv2d:
    """2-d convolution layer over (batch, channel, time, lead) maps."""

    def __init__(self, in_channels, out_channels, kernel, stride=(1, 1), padding=(0, 0),
                 *, rng, dtype=np.float32):
        kt, kl = kernel
        self.stride = (int(stride[0]), int(stride[1]))
        self.padding = (int(padding[0]), int(padding[1]))
        self.weight = _uniform_fan_in(rng, (out_channels, in_channels, kt, kl),
                                      in_channels * kt * kl, dtype)
        self.bias = _zeros(out_channels, dtype)

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.weight, self.bias, self.stride, self.padding)

    def named_parameters(self):
        return [("weight", self.weight), ("bias", self.bias)]

    def named_buffers(self):
        return []


class Conv1d:
    """1-d convolution layer over (batch, channel, time) maps."""

    def __init__(self, in_channels, out_channels, kernel, stride=1, padding=0,
                 *, rng, dtype=np.float32):
        self.stride = int(stride)
        self.padding = int(padding)
        self.weight = _uniform_fan_in(rng, (out_channels, in_channels, kernel),
                                      in_channels * kernel, dtype)
        self.bias = _zeros(out_channels, dtype)

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv1d(x, self.weight, self.bias, self.stride, self.padding)

    def named_parameters(self):
        return [("weight", self.weight), ("bias", self.bias)]

    def named_buffers(self):
        return []


class Linear:
    def __init__(self, in_features, out_features, *, rng, dtype=np.float32):
        self.weight = _uniform_fan_in(rng, (out_features, in_features), in_features, dtype)
        self.bias = _zeros(out_features, dtype)

    def forward(self, x: Tensor) -> Tensor:
        return ops.linear(x, self.weight, self.bias)

    def named_parameters(self):
        return [("weight", self.weight), ("bias", self.bias)]

    def named_buffers(self):
        return []


class BatchNorm:
    """Per-channel batch normalization with running statistics.

    Training mode requires at least two values per channel across batch and
    spatial positions; evaluation mode applies the running statistics.
    """

    def __init__(self, channels, *, eps=1e-5, momentum=0.1, dtype=np.float32):
        self.eps = float(eps)
        self.momentum = float(momentum)
        if not 0.0 < self.momentum < 1.0:
            raise ValueError(f"batch-norm momentum must lie in (0,1), got {momentum}")
        self.gamma = Tensor(np.ones(channels, dtype=dtype), requires_grad=True)
        self.beta = _zeros(channels, dtype)
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)

    def forward(self, x: Tensor, training: bool = False) -> Tensor:
        return ops.batch_norm(x, self.gamma, self.beta, self.running_mean,
                              self.running_var, training, self.momentum, self.eps)

    def named_parameters(self):
        return [("gamma", self.gamma), ("beta", self.beta)]

    def named_buffers(self):
        return [("running_mean", self.running_mean), ("running_var", self.running_var)]


class SqueezeExcite:
    """Channel attention: squeeze to per-channel means, gate through a
    bottleneck of width ``max(channels // ratio, 1)``, rescale channels."""

    def __init__(self, channels, ratio=16, *, rng, dtype=np.float32):
        if ratio < 1:
            raise ValueError(f"squeeze-excite ratio must be >= 1, got {ratio}")
        hidden = max(channels // ratio, 1)
        self.w1 = _uniform_fan_in(rng, (hidden, channels), channels, dtype)
        self.b1 = _zeros(hidden, dtype)
        self.w2 = _uniform_fan_in(rng, (channels, hidden), hidden, dtype)
        self.b2 = _zeros(channels, dtype)

    def forward(self, x: Tensor) -> Tensor:
        squeezed = ops.global_avg_pool(x)
        hidden = ops.relu(ops.linear(squeezed, self.w1, self.b1))
        gate = ops.sigmoid(ops.linear(hidden, self.w2, self.b2))
        return ops.scale_channels(x, gate)

    def named_parameters(self):
        return [("w1", self.w1), ("b1", self.b1), ("w2", self.w2), ("b2", self.b2)]

    def named_buffers(self):
        return []


class ResBlock:
    """Pre-activation residual block, 2-d or 1-d.

    Main path: BN -> ReLU -> conv(k, stride) -> BN -> ReLU -> conv(k, 1),
    then optional squeeze-excitation. The skip path is the identity when the
    shape is unchanged, otherwise a size-1 projection convolution with the
    block's stride. Kernels apply along time only; same-padding keeps extents
    governed by stride alone.
    """

    def __init__(self, ndim, in_channels, out_channels, kernel, stride=1,
                 se_ratio=16, use_se=True, *, rng, dtype=np.float32):
        if ndim not in (1, 2):
            raise ValueError(f"residual block dimensionality must be 1 or 2, got {ndim}")
        if kernel % 2 != 1:
            raise ValueError(f"residual block kernel must be odd, got {kernel}")
        if stride not in (1, 2):
            raise ValueError(f"residual block stride must be 1 or 2, got {stride}")
        self.ndim = ndim
        self.in_channels = in_channels
        self.out_channels = out_channels
        pad = (kernel - 1) // 2
        self.bn1 = BatchNorm(in_channels, dtype=dtype)
        self.bn2 = BatchNorm(out_channels, dtype=dtype)
        if ndim == 2:
            self.conv1 = Conv2d(in_channels, out_channels, (kernel, 1), (stride, 1),
                                (pad, 0), rng=rng, dtype=dtype)
            self.conv2 = Conv2d(out_channels, out_channels, (kernel, 1), (1, 1),
                                (pad, 0), rng=rng, dtype=dtype)
        else:
            self.conv1 = Conv1d(in_channels, out_channels, kernel, stride, pad,
                                rng=rng, dtype=dtype)
            self.conv2 = Conv1d(out_channels, out_channels, kernel, 1, pad,
                                rng=rng, dtype=dtype)
        self.se = SqueezeExcite(out_channels, se_ratio, rng=rng, dtype=dtype) if use_se else None
        if stride != 1 or in_channels != out_channels:
            if ndim == 2:
                self.proj = Conv2d(in_channels, out_channels, (1, 1), (stride, 1),
                                   (0, 0), rng=rng, dtype=dtype)
            else:
                self.proj = Conv1d(in_channels, out_channels, 1, stride, 0,
                                   rng=rng, dtype=dtype)
        else:
            self.proj = None

    def forward(self, x: Tensor, training: bool = False) -> Tensor:
        if x.shape[1] != self.in_channels:
            raise ShapeError(
                f"residual block expects {self.in_channels} channels, got {x.shape[1]}")
        h = ops.relu(self.bn1.forward(x, training))
        h = self.conv1.forward(h)
        h = ops.relu(self.bn2.forward(h, training))
        h = self.conv2.forward(h)
        if self.se is not None:
            h = self.se.forward(h)
        skip = x if self.proj is None else self.proj.forward(x)
        return ops.add(h, skip)

    def _children(self):
        kids = [("bn1", self.bn1), ("conv1", self.conv1),
                ("bn2", self.bn2), ("conv2", self.conv2)]
        if self.se is not None:
            kids.append(("se", self.se))
        if self.proj is not None:
            kids.append(("proj", self.proj))
        return kids

    def named_parameters(self):
        out = []
        for prefix, child in self._children():
            out.extend((f"{prefix}.{n}", p) for n, p in child.named_parameters())
        return out

    def named_buffers(self):
        out = []
        for prefix, child in self._children():
            out.extend((f"{prefix}.{n}", b) for n, b in child.named_buffers())
        return out
