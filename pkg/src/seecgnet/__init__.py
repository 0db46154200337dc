"""Multi-scale squeeze-and-excitation residual network for multi-lead ECG signals.

The package is self-contained: a tape-based reverse-mode autodiff engine,
the network layers and model topology, Fourier-domain signal resampling,
dataset handling, a training harness with evaluation metrics, sklearn-style
estimator wrappers, and a command-line interface.
"""

from .autodiff import Graph, GradCheckReport, Tensor, grad_check
from .data import (EcgRecord, kfold_records, load_dataset, records_to_arrays,
                   save_dataset, split_records, synth_dataset)
from .estimators import FourierResampler, SEECGNetClassifier
from .metrics import MetricsReport
from .model import (Model, ModelConfig, build_model, load_weights, param_count,
                    save_weights)
from .signal import dft, fourier_resample, idft
from .training import (Adam, TrainConfig, cross_entropy, crossvalidate, evaluate,
                       focal_loss, lr_at_epoch, train)

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "EcgRecord",
    "FourierResampler",
    "GradCheckReport",
    "Graph",
    "MetricsReport",
    "Model",
    "ModelConfig",
    "SEECGNetClassifier",
    "Tensor",
    "TrainConfig",
    "__version__",
    "build_model",
    "cross_entropy",
    "crossvalidate",
    "dft",
    "evaluate",
    "focal_loss",
    "fourier_resample",
    "grad_check",
    "idft",
    "kfold_records",
    "load_dataset",
    "load_weights",
    "lr_at_epoch",
    "param_count",
    "records_to_arrays",
    "save_dataset",
    "save_weights",
    "split_records",
    "synth_dataset",
    "train",
]
