"""Crack-profile reconstruction from simulated eddy-current scans.

The pieces: a deterministic surrogate forward model (`simulate`),
dataset generation and file formats (`dataset`), a hand-rolled
encoder-decoder network with exact gradients (`neural`), the Ranger
optimizer (`optim`), and the training/evaluation harness plus CLI
(`harness`).
"""

from .dataset import (
    Dataset,
    build_dataset,
    compute_channel_stats,
    load_dataset,
    save_dataset,
    split,
    standardize,
)
from .rng import Rng, derive_stream
from .simulate import SimConfig, forward_operate, with_calibration

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "Rng",
    "SimConfig",
    "build_dataset",
    "compute_channel_stats",
    "derive_stream",
    "forward_operate",
    "load_dataset",
    "save_dataset",
    "split",
    "standardize",
    "with_calibration",
    "__version__",
]
