"""Losses, the Adam optimizer with a step-decay schedule, the training loop,
and evaluation with cross-validation support.

Cross-entropy is the default objective; the focal variant multiplies each
sample's log-loss by ``alpha * (1 - p_class) ** gamma``, shrinking the
gradient of easy examples to cope with class imbalance. Both are computed
through log-softmax, so saturated logits cannot overflow.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .autodiff import Graph, Tensor, ops
from .data import records_to_arrays
from .errors import ShapeError
from .metrics import MetricsReport
from .model import Model
from .seeding import derive_seed


@dataclass
class TrainConfig:
    """Optimization settings: loss choice, Adam constants, step-decay schedule."""

    max_epochs: int = 128
    initial_lr: float = 1e-2
    decay_epochs: tuple = (16, 32, 64, 128)
    decay_factor: float = 10.0
    batch_size: int = 64
    loss: str = "cross_entropy"
    alpha: float = 0.25
    gamma: float = 2.0
    class_weights: Optional[tuple] = None
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        self.decay_epochs = tuple(int(e) for e in self.decay_epochs)
        if list(self.decay_epochs) != sorted(self.decay_epochs):
            raise ValueError(f"decay_epochs must be ascending, got {self.decay_epochs}")
        if self.loss not in ("cross_entropy", "focal"):
            raise ValueError(f"loss must be 'cross_entropy' or 'focal', got {self.loss!r}")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be non-negative, got {self.gamma}")
        if self.max_epochs < 1 or self.batch_size < 1:
            raise ValueError("max_epochs and batch_size must be positive")
        if self.initial_lr < 0 or self.decay_factor <= 0:
            raise ValueError("initial_lr must be >= 0 and decay_factor > 0")

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["decay_epochs"] = list(self.decay_epochs)
        if self.class_weights is not None:
            d["class_weights"] = list(self.class_weights)
        return d


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def cross_entropy(logits: Tensor, targets) -> Tensor:
    """Mean negative log-probability of the target classes."""
    logp = ops.log_softmax(logits)
    picked = ops.take_classes(logp, np.asarray(targets))
    return ops.scale(ops.mean_axis(picked, 0), -1.0)


def focal_loss(logits: Tensor, targets, alpha: float = 0.25, gamma: float = 2.0,
               class_weights: Optional[Sequence[float]] = None) -> Tensor:
    """Mean of ``-alpha_c * (1 - p_c)**gamma * log(p_c)`` over the batch.

    ``alpha`` applies uniformly unless a per-class weight vector is given,
    in which case ``alpha_c = class_weights[target]``.
    """
    if gamma < 0:
        raise ValueError(f"gamma must be non-negative, got {gamma}")
    targets = np.asarray(targets)
    logp = ops.log_softmax(logits)
    picked = ops.take_classes(logp, targets)
    p = ops.exp(picked)
    hardness = ops.pow_const(ops.add_const(ops.scale(p, -1.0), 1.0), gamma)
    weighted = ops.mul(hardness, picked)
    if class_weights is not None:
        weights = np.asarray(class_weights, dtype=np.float64)
        if weights.shape != (logits.shape[1],):
            raise ShapeError(
                f"class_weights shape {weights.shape} must be ({logits.shape[1]},)")
        per_sample = -weights[targets]
    else:
        per_sample = np.full(targets.shape[0], -float(alpha))
    coeff = Tensor(per_sample.astype(logits.dtype))
    return ops.mean_axis(ops.mul(weighted, coeff), 0)


# ---------------------------------------------------------------------------
# optimizer and schedule
# ---------------------------------------------------------------------------

class Adam:
    """Standard Adam recurrence with bias correction.

    Moment buffers exist for exactly the registered parameters; the step
    counter increments once per call regardless of gradient values.
    """

    def __init__(self, params: Mapping[str, Tensor], beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self.m = {name: np.zeros_like(p.data) for name, p in params.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in params.items()}

    def step(self, params: Mapping[str, Tensor], lr: float) -> None:
        for name in params:
            if params[name].grad is None:
                raise ValueError(f"adam step: parameter {name!r} has no gradient")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        correct1 = 1.0 - b1 ** self.t
        correct2 = 1.0 - b2 ** self.t
        for name, p in params.items():
            g = p.grad
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p.data -= lr * (m / correct1) / (np.sqrt(v / correct2) + self.eps)


def lr_at_epoch(config: TrainConfig, epoch: int) -> float:
    """Learning rate after the step decays scheduled at or before ``epoch``."""
    if not 0 <= epoch < config.max_epochs:
        raise ValueError(f"epoch {epoch} outside [0, {config.max_epochs})")
    n_decays = sum(1 for d in config.decay_epochs if d <= epoch)
    return config.initial_lr / config.decay_factor ** n_decays


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

@dataclass
class EpochStats:
    epoch: int
    lr: float
    train_loss: float
    val: Optional[MetricsReport] = None

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "lr": self.lr,
            "train_loss": self.train_loss,
            "val": self.val.to_dict() if self.val is not None else None,
        }


def _loss_fn(config: TrainConfig):
    if config.loss == "focal":
        return lambda logits, y: focal_loss(logits, y, config.alpha, config.gamma,
                                            config.class_weights)
    return lambda logits, y: cross_entropy(logits, y)


def fit_arrays(model: Model, x: np.ndarray, y: np.ndarray, config: TrainConfig,
               x_val: Optional[np.ndarray] = None,
               y_val: Optional[np.ndarray] = None) -> list[EpochStats]:
    """Run the full training schedule on (N, leads, samples) arrays.

    Each epoch shuffles with a seeded generator, walks mini-batches (final
    short batch kept), and applies one Adam step per batch at the scheduled
    learning rate. Fully deterministic for a fixed seed.
    """
    x = np.asarray(x, dtype=np.float32)
    y = np.asarray(y)
    cfg = model.config
    if x.ndim != 3 or x.shape[1:] != (cfg.n_leads, cfg.n_samples):
        raise ShapeError(
            f"training batch shape {x.shape} does not match model input "
            f"(N, {cfg.n_leads}, {cfg.n_samples})")
    if len(x) == 0:
        raise ValueError("training set is empty")
    if y.shape != (len(x),):
        raise ShapeError(f"labels shape {y.shape} must be ({len(x)},)")
    if y.min() < 0 or y.max() >= cfg.n_classes:
        raise ValueError(f"labels outside [0, {cfg.n_classes})")

    loss_fn = _loss_fn(config)
    optimizer = Adam(model.params, config.beta1, config.beta2, config.eps)
    shuffle_rng = np.random.default_rng(
        np.random.SeedSequence(derive_seed(config.seed, "shuffle")))
    history: list[EpochStats] = []
    n = len(x)
    for epoch in range(config.max_epochs):
        lr = lr_at_epoch(config, epoch)
        order = shuffle_rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            model.zero_grad()
            with Graph() as g:
                logits = model.forward(x[idx], training=True)
                loss = loss_fn(logits, y[idx])
            g.backward(loss)
            optimizer.step(model.params, lr)
            total += loss.item() * len(idx)
        val_report = None
        if x_val is not None and len(x_val):
            val_report = evaluate_arrays(model, x_val, y_val, config.batch_size)
        history.append(EpochStats(epoch=epoch, lr=lr, train_loss=total / n, val=val_report))
    return history


def train(model: Model, train_records, val_records, config: TrainConfig):
    """Record-level wrapper around :func:`fit_arrays`; returns (model, history)."""
    x, y = records_to_arrays(train_records)
    if val_records:
        x_val, y_val = records_to_arrays(val_records)
    else:
        x_val = y_val = None
    history = fit_arrays(model, x, y, config, x_val, y_val)
    return model, history


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def predict_arrays(model: Model, x: np.ndarray, batch_size: int = 256,
                   workers: int = 1) -> np.ndarray:
    """Argmax class predictions in evaluation mode (ties to the lowest index).

    ``workers > 1`` evaluates batches on a thread pool; no recording happens
    and results merge in record order, so predictions stay deterministic.
    """
    x = np.asarray(x, dtype=np.float32)
    starts = list(range(0, len(x), batch_size))
    if not starts:
        return np.zeros(0, dtype=np.int64)

    def run(start):
        logits = model.forward(x[start:start + batch_size], training=False)
        return np.argmax(logits.data, axis=1)

    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            preds = list(pool.map(run, starts))
    else:
        preds = [run(s) for s in starts]
    return np.concatenate(preds)


def evaluate_arrays(model: Model, x: np.ndarray, y: np.ndarray,
                    batch_size: int = 256, workers: int = 1) -> MetricsReport:
    if len(x) == 0:
        raise ValueError("cannot evaluate on an empty set")
    y_pred = predict_arrays(model, x, batch_size, workers)
    return MetricsReport.from_predictions(np.asarray(y), y_pred, model.config.n_classes)


def evaluate(model: Model, records, batch_size: int = 256,
             workers: int = 1) -> MetricsReport:
    x, y = records_to_arrays(records)
    return evaluate_arrays(model, x, y, batch_size, workers)


# ---------------------------------------------------------------------------
# cross-validation
# ---------------------------------------------------------------------------

def summarize_reports(reports: Sequence[MetricsReport]) -> dict:
    """Mean and standard deviation of each headline metric across folds."""
    summary = {}
    for key in ("micro_f1", "macro_f1", "micro_precision", "micro_recall",
                "macro_precision", "macro_recall"):
        values = np.array([getattr(r, key) for r in reports], dtype=np.float64)
        summary[key] = {"mean": float(values.mean()), "std": float(values.std())}
    return summary


def crossvalidate(records, model_config, train_config: TrainConfig, k: int = 5,
                  dtype=np.float32):
    """Train k models, each holding out one subject-disjoint fold.

    Returns (per-fold MetricsReports, mean/std summary). Deterministic for a
    fixed seed: fold assignment and every per-fold init draw from named
    sub-seeds of ``train_config.seed``.
    """
    from .data import kfold_records
    from .model import build_model

    folds = kfold_records(records, k, seed=derive_seed(train_config.seed, "kfold"))
    reports: list[MetricsReport] = []
    for i in range(k):
        held_out = folds[i]
        train_recs = [r for j, fold in enumerate(folds) if j != i for r in fold]
        model = build_model(model_config, seed=derive_seed(train_config.seed, f"fold{i}-init"),
                            dtype=dtype)
        train(model, train_recs, None, train_config)
        reports.append(evaluate(model, held_out, train_config.batch_size))
    return reports, summarize_reports(reports)
