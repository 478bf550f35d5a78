"""Network kernels, the model and its variants, checkpoints, gradcheck."""

from .checkpoint import load_checkpoint, save_checkpoint
from .model import (
    VARIANTS,
    ModelParams,
    architecture,
    expected_shapes,
    init_params,
    mae_loss,
    model_backward,
    model_forward,
)

__all__ = [
    "VARIANTS",
    "ModelParams",
    "architecture",
    "expected_shapes",
    "init_params",
    "load_checkpoint",
    "mae_loss",
    "model_backward",
    "model_forward",
    "save_checkpoint",
]
