"""Input validation helpers shared by the estimators and core modules."""

from __future__ import annotations

import numpy as np

from .errors import ShapeError


def check_signal_array(X, n_leads: int | None = None, n_samples: int | None = None,
                       name: str = "X") -> np.ndarray:
    """Validate a (n_records, n_leads, n_samples) float signal array.

    A 2-d array is treated as single-lead and expanded to 3-d. Returns a
    float32 array; raises on non-finite values or extent mismatches.
    """
    X = np.asarray(X)
    if X.ndim == 2:
        X = X[:, None, :]
    if X.ndim != 3:
        raise ShapeError(
            f"{name} must be 3-d (n_records, n_leads, n_samples), got shape {X.shape}")
    if X.size == 0:
        raise ShapeError(f"{name} is empty")
    if not np.issubdtype(X.dtype, np.floating) and not np.issubdtype(X.dtype, np.integer):
        raise ShapeError(f"{name} must be numeric, got dtype {X.dtype}")
    X = X.astype(np.float32, copy=False)
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite samples")
    if n_leads is not None and X.shape[1] != n_leads:
        raise ShapeError(f"{name} has {X.shape[1]} leads, expected {n_leads}")
    if n_samples is not None and X.shape[2] != n_samples:
        raise ShapeError(f"{name} has {X.shape[2]} samples per lead, expected {n_samples}")
    return X


def check_labels(y, n_records: int | None = None) -> np.ndarray:
    """Validate an integer label vector; returns it as int64."""
    y = np.asarray(y)
    if y.ndim != 1:
        raise ShapeError(f"y must be 1-d, got shape {y.shape}")
    if not np.issubdtype(y.dtype, np.integer):
        if np.issubdtype(y.dtype, np.floating) and np.all(y == y.astype(np.int64)):
            y = y.astype(np.int64)
        else:
            raise ValueError("y must hold integer class labels")
    if n_records is not None and y.shape[0] != n_records:
        raise ShapeError(f"y has {y.shape[0]} labels for {n_records} records")
    return y.astype(np.int64)
