"""Six-stage network topology: stem convolution, a shared 2-d residual
stage, parallel multi-scale branches of 2-d then 1-d residual blocks, global
average pooling, and a fully connected classifier.

The multi-lead input (batch, leads, samples) is treated as a one-channel
2-d image with axes (time, lead); kernels of size "k x 1" span k time steps
on a single lead. Cross-lead mixing happens when the lead axis is folded
into the channel axis before the 1-d branches.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, dataclass, fields

import numpy as np

from .autodiff import Tensor, ops
from .errors import ConfigError, DataError, ShapeError
from .nn import Conv2d, Linear, ResBlock

_WEIGHTS_MAGIC = b"SEECGNETW"
_WEIGHTS_VERSION = 1

#: Maps "standard" / "wide" precision names onto numpy dtypes.
PRECISIONS = {"standard": np.float32, "wide": np.float64}


@dataclass(frozen=True)
class ModelConfig:
    """Complete hyperparameter description of the network topology."""

    n_leads: int
    n_samples: int
    n_classes: int
    stem_kernel: int = 25
    stage2_kernel: int = 15
    branch_kernels: tuple = (3, 5, 7)
    stem_channels: int = 16
    stage2_channels: int = 32
    branch_channels: int = 32
    block1d_channels: int = 64
    blocks_per_branch_2d: int = 2
    blocks_per_branch_1d: int = 2
    se_ratio: int = 16
    use_2d_blocks: bool = True
    use_se: bool = True
    use_parallel: bool = True

    def __post_init__(self):
        object.__setattr__(self, "branch_kernels", tuple(int(k) for k in self.branch_kernels))
        if self.n_classes < 2:
            raise ConfigError(f"n_classes must be >= 2, got {self.n_classes}")
        if not self.branch_kernels:
            raise ConfigError("branch_kernels must be non-empty")
        for name in ("n_leads", "n_samples", "stem_channels", "stage2_channels",
                     "branch_channels", "block1d_channels", "blocks_per_branch_2d",
                     "blocks_per_branch_1d", "se_ratio"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        for k in (self.stem_kernel, self.stage2_kernel, *self.branch_kernels):
            if k < 1 or k % 2 == 0:
                raise ConfigError(f"kernel sizes must be odd and positive, got {k}")

    def effective_branch_kernels(self) -> tuple:
        """Branch kernels after the parallel-blocks toggle.

        With parallelism disabled only the kernel-5 branch is kept; if 5 is
        not configured, the median kernel stands in.
        """
        if self.use_parallel:
            return self.branch_kernels
        if 5 in self.branch_kernels:
            return (5,)
        ordered = sorted(self.branch_kernels)
        return (ordered[len(ordered) // 2],)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["branch_kernels"] = list(self.branch_kernels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model config fields: {sorted(unknown)}")
        return cls(**d)

    def fingerprint(self) -> bytes:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).digest()


class _Branch:
    def __init__(self, kernel, blocks2d, blocks1d):
        self.kernel = kernel
        self.blocks2d = blocks2d
        self.blocks1d = blocks1d


class Model:
    """A built network: layer pipeline plus ordered parameter registry."""

    def __init__(self, config: ModelConfig, dtype):
        self.config = config
        self.dtype = np.dtype(dtype)
        self.params: dict[str, Tensor] = {}
        self.buffers: dict[str, np.ndarray] = {}
        self.stem = None
        self.stage2 = None
        self.branches: list[_Branch] = []
        self.classifier = None

    def _register(self, prefix: str, layer) -> None:
        for name, p in layer.named_parameters():
            full = f"{prefix}.{name}"
            if full in self.params:
                raise ConfigError(f"duplicate parameter name {full}")
            self.params[full] = p
        for name, b in layer.named_buffers():
            self.buffers[f"{prefix}.{name}"] = b

    def forward(self, batch, training: bool = False) -> Tensor:
        """Logits of shape (N, n_classes) for a (N, leads, samples) batch."""
        arr = batch.data if isinstance(batch, Tensor) else np.asarray(batch, dtype=self.dtype)
        cfg = self.config
        if arr.ndim != 3 or arr.shape[1:] != (cfg.n_leads, cfg.n_samples):
            raise ShapeError(
                f"expected batch of shape (N, {cfg.n_leads}, {cfg.n_samples}), got {arr.shape}")
        # (N, leads, samples) -> one-channel image with axes (time, lead)
        image = np.ascontiguousarray(arr.transpose(0, 2, 1))[:, None, :, :]
        h = self.stem.forward(Tensor(image.astype(self.dtype, copy=False)))
        if self.stage2 is not None:
            h = self.stage2.forward(h, training)
        features = []
        for branch in self.branches:
            hb = h
            for block in branch.blocks2d:
                hb = block.forward(hb, training)
            n, c, t, l = hb.shape
            hb = ops.permute(hb, (0, 1, 3, 2))
            hb = ops.reshape(hb, (n, c * l, t))
            for block in branch.blocks1d:
                hb = block.forward(hb, training)
            features.append(ops.global_avg_pool(hb))
        merged = ops.concat(features, axis=1)
        return self.classifier.forward(merged)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def __repr__(self):
        return (f"Model(leads={self.config.n_leads}, samples={self.config.n_samples}, "
                f"classes={self.config.n_classes}, params={param_count(self)})")


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def build_model(config: ModelConfig, seed: int, dtype=np.float32) -> Model:
    """Construct the network with fan-in-scaled uniform weights drawn from a
    seeded generator; biases start at zero, batch-norm at identity.

    Raises :class:`ConfigError` at build time, naming the stage, if the
    configured strides would collapse the time extent below one sample.
    """
    model = Model(config, dtype)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    dtype = model.dtype

    t = config.n_samples
    pad = (config.stem_kernel - 1) // 2
    model.stem = Conv2d(1, config.stem_channels, (config.stem_kernel, 1), (2, 1), (pad, 0),
                        rng=rng, dtype=dtype)
    model._register("stem", model.stem)
    t = _check_extent(_ceil_div(t, 2), "stem")

    branch_in = config.stem_channels
    if config.use_2d_blocks:
        model.stage2 = ResBlock(2, config.stem_channels, config.stage2_channels,
                                config.stage2_kernel, stride=2, se_ratio=config.se_ratio,
                                use_se=config.use_se, rng=rng, dtype=dtype)
        model._register("stage2", model.stage2)
        t = _check_extent(_ceil_div(t, 2), "stage2")
        branch_in = config.stage2_channels

    for kernel in config.effective_branch_kernels():
        prefix = f"branch{kernel}"
        t_branch = t
        blocks2d = []
        c = branch_in
        if config.use_2d_blocks:
            for i in range(config.blocks_per_branch_2d):
                block = ResBlock(2, c, config.branch_channels, kernel, stride=2,
                                 se_ratio=config.se_ratio, use_se=config.use_se,
                                 rng=rng, dtype=dtype)
                model._register(f"{prefix}.b2d{i}", block)
                blocks2d.append(block)
                c = config.branch_channels
                t_branch = _check_extent(_ceil_div(t_branch, 2), f"{prefix}.b2d{i}")
        blocks1d = []
        c1d = c * config.n_leads
        for i in range(config.blocks_per_branch_1d):
            block = ResBlock(1, c1d, config.block1d_channels, kernel, stride=2,
                             se_ratio=config.se_ratio, use_se=config.use_se,
                             rng=rng, dtype=dtype)
            model._register(f"{prefix}.b1d{i}", block)
            blocks1d.append(block)
            c1d = config.block1d_channels
            t_branch = _check_extent(_ceil_div(t_branch, 2), f"{prefix}.b1d{i}")
        model.branches.append(_Branch(kernel, blocks2d, blocks1d))

    n_branches = len(config.effective_branch_kernels())
    model.classifier = Linear(n_branches * config.block1d_channels, config.n_classes,
                              rng=rng, dtype=dtype)
    model._register("classifier", model.classifier)
    return model


def _check_extent(t: int, stage: str) -> int:
    if t < 1:
        raise ConfigError(f"time extent collapses below 1 at stage {stage}")
    return t


def param_count(model: Model) -> int:
    """Total number of trainable scalars in the model."""
    return sum(p.size for p in model.params.values())


def save_weights(model: Model, path) -> None:
    """Write all parameters and running statistics to a binary weight file.

    Layout (little-endian): magic, format version, sha256 fingerprint of the
    canonicalized config, record count, then per-array records of name
    length, name bytes, rank, extents, and raw 32-bit scalars.
    """
    entries = list(model.params.items()) + [
        (name, buf) for name, buf in model.buffers.items()]
    with open(path, "wb") as f:
        f.write(_WEIGHTS_MAGIC)
        f.write(struct.pack("<H", _WEIGHTS_VERSION))
        f.write(model.config.fingerprint())
        f.write(struct.pack("<I", len(entries)))
        for name, value in entries:
            arr = value.data if isinstance(value, Tensor) else value
            data = np.ascontiguousarray(arr, dtype="<f4")
            name_bytes = name.encode("utf-8")
            f.write(struct.pack("<H", len(name_bytes)))
            f.write(name_bytes)
            f.write(struct.pack("<B", data.ndim))
            f.write(struct.pack(f"<{data.ndim}I", *data.shape))
            f.write(data.tobytes())


def _read_exact(f, n: int, what: str) -> bytes:
    chunk = f.read(n)
    if len(chunk) != n:
        raise DataError(f"weight file truncated while reading {what}")
    return chunk


def load_weights(config: ModelConfig, path, dtype=np.float32) -> Model:
    """Rebuild a model from ``config`` and fill it from a weight file.

    The file's config fingerprint must match ``config``; any truncation,
    unknown name, missing name, or shape mismatch raises before a partially
    filled model can escape.
    """
    model = build_model(config, seed=0, dtype=dtype)
    with open(path, "rb") as f:
        magic = _read_exact(f, len(_WEIGHTS_MAGIC), "magic")
        if magic != _WEIGHTS_MAGIC:
            raise DataError(f"not a weight file: bad magic {magic!r}")
        (version,) = struct.unpack("<H", _read_exact(f, 2, "version"))
        if version != _WEIGHTS_VERSION:
            raise DataError(f"unsupported weight format version {version}")
        fingerprint = _read_exact(f, 32, "config fingerprint")
        if fingerprint != config.fingerprint():
            raise ConfigError(
                "weight file was saved with a different model config (fingerprint mismatch)")
        (count,) = struct.unpack("<I", _read_exact(f, 4, "record count"))
        loaded: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", _read_exact(f, 2, "name length"))
            name = _read_exact(f, name_len, "name").decode("utf-8")
            (rank,) = struct.unpack("<B", _read_exact(f, 1, "rank"))
            shape = struct.unpack(f"<{rank}I", _read_exact(f, 4 * rank, f"extents of {name}"))
            n_bytes = 4 * int(np.prod(shape, dtype=np.int64)) if rank else 4
            raw = _read_exact(f, n_bytes, f"data of {name}")
            loaded[name] = np.frombuffer(raw, dtype="<f4").reshape(shape)
        if f.read(1):
            raise DataError("weight file has trailing bytes after the last record")

    expected = set(model.params) | set(model.buffers)
    if set(loaded) != expected:
        missing = sorted(expected - set(loaded))
        extra = sorted(set(loaded) - expected)
        raise DataError(f"weight file name mismatch: missing {missing}, unexpected {extra}")
    for name, arr in loaded.items():
        if name in model.params:
            target = model.params[name].data
        else:
            target = model.buffers[name]
        if arr.shape != target.shape:
            raise DataError(f"shape mismatch for {name}: file {arr.shape}, model {target.shape}")
        target[...] = arr.astype(target.dtype)
    return model
