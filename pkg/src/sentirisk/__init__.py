"""sentirisk: market-sentiment sequence learning with risk alerting.

A self-contained CNN + GRU implementation (manual backpropagation on a dense
float64 matrix core) that ingests market bars and raw text, labels sentiment
with a lexicon, trains a joint regression/classification model over 20-day
windows, compares ablations, and emits risk alerts on sentiment inflections.
"""

from .errors import (
    CheckpointError,
    DataValidationError,
    NumericError,
    ShapeError,
    TrainingDivergedError,
)
from .matrix import Matrix, finite_diff_grad, matmul, softmax
from .model import ArchKind, CnnGruModel, ModelConfig, build_model, load_checkpoint, save_checkpoint
# NB: the train() entry point is deliberately not re-exported here; a bare
# `train` attribute would shadow the sentirisk.train submodule.
from .train import MetricsReport, TrainConfig, compare_ablations, evaluate

__version__ = "0.1.0"

__all__ = [
    "ArchKind",
    "CheckpointError",
    "CnnGruModel",
    "DataValidationError",
    "Matrix",
    "MetricsReport",
    "ModelConfig",
    "NumericError",
    "ShapeError",
    "TrainConfig",
    "TrainingDivergedError",
    "build_model",
    "compare_ablations",
    "evaluate",
    "finite_diff_grad",
    "load_checkpoint",
    "matmul",
    "save_checkpoint",
    "softmax",
    "__version__",
]
