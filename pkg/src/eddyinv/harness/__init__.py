"""Training loop, evaluation protocol, montages, and the CLI."""

from .evaluation import (
    EvalReport,
    benchmark_reconstruction,
    binarize,
    evaluate,
    predict,
    run_ablations,
)
from .montage import write_montage, write_pgm, write_profile_pgm
from .training import TrainConfig, TrainHistory, train, train_steps, validation_raw_mae

__all__ = [
    "EvalReport",
    "TrainConfig",
    "TrainHistory",
    "benchmark_reconstruction",
    "binarize",
    "evaluate",
    "predict",
    "run_ablations",
    "train",
    "train_steps",
    "validation_raw_mae",
    "write_montage",
    "write_pgm",
    "write_profile_pgm",
]
