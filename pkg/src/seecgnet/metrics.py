"""Confusion-matrix based evaluation metrics.

For single-label multi-class prediction the micro-averaged precision, recall,
and F1 all equal overall accuracy; macro averages weight classes equally.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _f1(p: float, r: float) -> float:
    return 0.0 if p + r == 0 else 2.0 * p * r / (p + r)


@dataclass
class MetricsReport:
    """Confusion matrix (rows = truth, columns = prediction) plus micro,
    macro, and per-class precision/recall/F1."""

    confusion: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    micro_precision: float
    micro_recall: float
    micro_f1: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    n_samples: int

    @classmethod
    def from_predictions(cls, y_true, y_pred, n_classes: int) -> "MetricsReport":
        y_true = np.asarray(y_true, dtype=np.int64)
        y_pred = np.asarray(y_pred, dtype=np.int64)
        if y_true.shape != y_pred.shape or y_true.ndim != 1:
            raise ValueError(
                f"predictions shape {y_pred.shape} must match labels shape {y_true.shape}")
        if y_true.size == 0:
            raise ValueError("cannot compute metrics on an empty set")
        if y_true.min() < 0 or y_true.max() >= n_classes:
            raise ValueError(f"labels outside [0, {n_classes})")
        if y_pred.min() < 0 or y_pred.max() >= n_classes:
            raise ValueError(f"predictions outside [0, {n_classes})")
        confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
        np.add.at(confusion, (y_true, y_pred), 1)

        tp = np.diag(confusion).astype(np.float64)
        fp = confusion.sum(axis=0) - tp
        fn = confusion.sum(axis=1) - tp
        with np.errstate(invalid="ignore", divide="ignore"):
            precision = np.where(tp + fp > 0, tp / (tp + fp), 0.0)
            recall = np.where(tp + fn > 0, tp / (tp + fn), 0.0)
        f1 = np.array([_f1(p, r) for p, r in zip(precision, recall)])

        micro_p = tp.sum() / max(tp.sum() + fp.sum(), 1e-300)
        micro_r = tp.sum() / max(tp.sum() + fn.sum(), 1e-300)
        return cls(
            confusion=confusion,
            precision=precision,
            recall=recall,
            f1=f1,
            micro_precision=float(micro_p),
            micro_recall=float(micro_r),
            micro_f1=float(_f1(micro_p, micro_r)),
            macro_precision=float(precision.mean()),
            macro_recall=float(recall.mean()),
            macro_f1=float(f1.mean()),
            n_samples=int(y_true.size),
        )

    @property
    def accuracy(self) -> float:
        return float(np.diag(self.confusion).sum() / self.n_samples)

    def to_dict(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "confusion": self.confusion.tolist(),
            "per_class": {
                "precision": self.precision.tolist(),
                "recall": self.recall.tolist(),
                "f1": self.f1.tolist(),
            },
            "micro": {"precision": self.micro_precision, "recall": self.micro_recall,
                      "f1": self.micro_f1},
            "macro": {"precision": self.macro_precision, "recall": self.macro_recall,
                      "f1": self.macro_f1},
        }
