"""CPU network core: layers, sequential models, SGD, freezing, checkpoints."""

from .arch import ARCHITECTURES, EMBEDDING_DIM, build_model, format_report, lenet4, parameter_report, vgg8
from .checkpoint import (
    BadMagicError,
    CheckpointError,
    TruncatedCheckpointError,
    VersionMismatchError,
    load_checkpoint,
    save_checkpoint,
)
from .layers import LayerSpec, ShapeError, conv2d, dense, flatten, maxpool, relu, sigmoid
from .model import INPUT_SHAPE, CacheMismatchError, DivergenceError, Model, zero_grads

__all__ = [
    "ARCHITECTURES", "EMBEDDING_DIM", "INPUT_SHAPE",
    "BadMagicError", "CacheMismatchError", "CheckpointError", "DivergenceError",
    "LayerSpec", "Model", "ShapeError", "TruncatedCheckpointError", "VersionMismatchError",
    "build_model", "conv2d", "dense", "flatten", "format_report", "lenet4",
    "load_checkpoint", "maxpool", "parameter_report", "relu", "save_checkpoint",
    "sigmoid", "vgg8", "zero_grads",
]
