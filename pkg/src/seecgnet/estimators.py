"""sklearn-style estimators wrapping the signal tools and the classifier.

``FourierResampler`` is a stateless transformer for length normalization and
``SEECGNetClassifier`` exposes the full train/predict cycle behind the usual
``fit`` / ``predict`` / ``predict_proba`` surface, so both compose with
sklearn pipelines, ``clone``, and parameter search utilities.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .autodiff import ops
from .model import ModelConfig, build_model
from .seeding import derive_seed
from .signal import default_target_len, fourier_resample
from .training import TrainConfig, fit_arrays, predict_arrays
from .validation import check_labels, check_signal_array


class FourierResampler(TransformerMixin, BaseEstimator):
    """Resample every lead of every record to a fixed length through the
    Fourier domain.

    Parameters
    ----------
    target_len : int or None
        Output length per lead. ``None`` picks the largest power of two not
        exceeding the input length seen at fit time.
    """

    def __init__(self, target_len=None):
        self.target_len = target_len

    def fit(self, X, y=None):
        X = check_signal_array(X)
        self.n_samples_in_ = X.shape[2]
        self.target_len_ = (int(self.target_len) if self.target_len is not None
                            else default_target_len(self.n_samples_in_))
        if self.target_len_ < 2:
            raise ValueError(f"target_len must be >= 2, got {self.target_len_}")
        return self

    def transform(self, X):
        check_is_fitted(self, "target_len_")
        X = check_signal_array(X)
        n, leads, _ = X.shape
        out = np.empty((n, leads, self.target_len_), dtype=np.float32)
        for i in range(n):
            for j in range(leads):
                out[i, j] = fourier_resample(X[i, j].astype(np.float64), self.target_len_)
        return out


class SEECGNetClassifier(ClassifierMixin, BaseEstimator):
    """Multi-lead signal classifier with the full multi-scale topology.

    ``fit`` expects ``X`` of shape (n_records, n_leads, n_samples) and
    integer labels; lead count, record length, and the class set are all
    inferred from the data. Training runs the configured epoch schedule and
    is deterministic for a fixed ``random_state``.
    """

    def __init__(self, stem_kernel=25, stage2_kernel=15, branch_kernels=(3, 5, 7),
                 stem_channels=16, stage2_channels=32, branch_channels=32,
                 block1d_channels=64, blocks_per_branch_2d=2, blocks_per_branch_1d=2,
                 se_ratio=16, use_2d_blocks=True, use_se=True, use_parallel=True,
                 loss="cross_entropy", alpha=0.25, gamma=2.0, max_epochs=128,
                 initial_lr=1e-2, decay_epochs=(16, 32, 64, 128), decay_factor=10.0,
                 batch_size=64, random_state=0):
        self.stem_kernel = stem_kernel
        self.stage2_kernel = stage2_kernel
        self.branch_kernels = branch_kernels
        self.stem_channels = stem_channels
        self.stage2_channels = stage2_channels
        self.branch_channels = branch_channels
        self.block1d_channels = block1d_channels
        self.blocks_per_branch_2d = blocks_per_branch_2d
        self.blocks_per_branch_1d = blocks_per_branch_1d
        self.se_ratio = se_ratio
        self.use_2d_blocks = use_2d_blocks
        self.use_se = use_se
        self.use_parallel = use_parallel
        self.loss = loss
        self.alpha = alpha
        self.gamma = gamma
        self.max_epochs = max_epochs
        self.initial_lr = initial_lr
        self.decay_epochs = decay_epochs
        self.decay_factor = decay_factor
        self.batch_size = batch_size
        self.random_state = random_state

    def _model_config(self, n_leads, n_samples, n_classes) -> ModelConfig:
        return ModelConfig(
            n_leads=n_leads, n_samples=n_samples, n_classes=n_classes,
            stem_kernel=self.stem_kernel, stage2_kernel=self.stage2_kernel,
            branch_kernels=tuple(self.branch_kernels),
            stem_channels=self.stem_channels, stage2_channels=self.stage2_channels,
            branch_channels=self.branch_channels, block1d_channels=self.block1d_channels,
            blocks_per_branch_2d=self.blocks_per_branch_2d,
            blocks_per_branch_1d=self.blocks_per_branch_1d,
            se_ratio=self.se_ratio, use_2d_blocks=self.use_2d_blocks,
            use_se=self.use_se, use_parallel=self.use_parallel)

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            max_epochs=self.max_epochs, initial_lr=self.initial_lr,
            decay_epochs=tuple(self.decay_epochs), decay_factor=self.decay_factor,
            batch_size=self.batch_size, loss=self.loss, alpha=self.alpha,
            gamma=self.gamma, seed=derive_seed(int(self.random_state), "shuffle-root"))

    def fit(self, X, y):
        X = check_signal_array(X)
        y = check_labels(y, n_records=X.shape[0])
        self.classes_ = np.unique(y)
        if len(self.classes_) < 2:
            raise ValueError("need at least 2 classes to fit a classifier")
        codes = np.searchsorted(self.classes_, y)
        config = self._model_config(X.shape[1], X.shape[2], len(self.classes_))
        self.model_ = build_model(config, seed=derive_seed(int(self.random_state), "init"))
        self.history_ = fit_arrays(self.model_, X, codes, self._train_config())
        self.n_leads_ = X.shape[1]
        self.n_samples_ = X.shape[2]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "model_")
        X = check_signal_array(X, n_leads=self.n_leads_, n_samples=self.n_samples_)
        chunks = []
        for start in range(0, len(X), self.batch_size):
            logits = self.model_.forward(X[start:start + self.batch_size], training=False)
            chunks.append(logits.data.copy())
        return np.concatenate(chunks)

    def predict(self, X):
        check_is_fitted(self, "model_")
        X = check_signal_array(X, n_leads=self.n_leads_, n_samples=self.n_samples_)
        codes = predict_arrays(self.model_, X, self.batch_size)
        return self.classes_[codes]

    def predict_proba(self, X):
        from .autodiff.tensor import Tensor

        logits = self.decision_function(X)
        return ops.softmax(Tensor(logits)).data
