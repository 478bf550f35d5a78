"""The training loop: shuffled batches, backprop, Ranger steps.

Everything downstream of (config, dataset, seed) is deterministic:
initialization draws from stream 0 of the training seed, the epoch-e
shuffle from stream 1+e, and batch order is sequential over the
shuffled indices with the last short batch kept.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..dataset import Dataset, standardize
from ..neural.checkpoint import save_checkpoint
from ..neural.model import ModelParams, init_params, model_backward, model_forward
from ..optim import RangerConfig, init_opt_state, ranger_step
from ..rng import Rng, derive_stream


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters; the defaults are the full-scale training recipe."""

    variant: str = "eddynet"
    channels: int = 320
    attn_channels: int = 20
    epochs: int = 30
    batch_size: int = 64
    lr: float = 2e-4
    seed: int = 0
    data_path: str | None = None
    out_path: str | None = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_raw_mae: list[float] = field(default_factory=list)


def _shuffled_indices(n: int, rng: Rng) -> np.ndarray:
    """Fisher-Yates over [0, n) driven by one dedicated stream."""
    order = np.arange(n)
    for i in range(n - 1, 0, -1):
        j = rng.next_u64() % (i + 1)
        order[i], order[j] = order[j], order[i]
    return order


def _truth_batch(dataset: Dataset, idx: np.ndarray) -> np.ndarray:
    return dataset.profiles[idx].astype(np.float64)[:, None, :, :]


def validation_raw_mae(params: ModelParams, val_set: Dataset, batch_size: int = 64) -> float:
    """Raw MAE over a dataset in eval mode, standardized with params' stats."""
    total = 0.0
    for start in range(0, val_set.n_samples, batch_size):
        idx = np.arange(start, min(start + batch_size, val_set.n_samples))
        x = standardize(val_set.channels[idx], params.channel_mean, params.channel_std)
        pred = model_forward(params, x, mode="eval")
        total += float(np.abs(pred - _truth_batch(val_set, idx)).sum())
    return total / (val_set.n_samples * val_set.profiles[0].size)


def train(
    cfg: TrainConfig,
    train_set: Dataset,
    val_set: Dataset | None = None,
    verbose: bool = False,
) -> tuple[ModelParams, TrainHistory]:
    """Train a fresh model; returns it with its history.

    ``train_set`` must carry channel stats computed from itself (they
    are baked into the model for eval-time standardization).  Writes a
    checkpoint to cfg.out_path when one is set.
    """
    if train_set.channel_mean is None or train_set.channel_std is None:
        raise ValueError("train_set has no channel stats; call compute_channel_stats first")
    params = init_params(cfg.variant, cfg.channels, cfg.attn_channels, derive_stream(cfg.seed, 0))
    params.channel_mean = train_set.channel_mean.copy()
    params.channel_std = train_set.channel_std.copy()
    fast = {name: params.tensors[name] for name in params.trainable_names()}
    state = init_opt_state(fast, RangerConfig(lr=cfg.lr))
    history = TrainHistory()
    n = train_set.n_samples
    for epoch in range(cfg.epochs):
        order = _shuffled_indices(n, derive_stream(cfg.seed, 1 + epoch))
        epoch_loss = 0.0
        for batch_no, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start : start + cfg.batch_size]
            x = standardize(train_set.channels[idx], params.channel_mean, params.channel_std)
            loss, grads = model_backward(params, x, _truth_batch(train_set, idx), mode="train")
            if not math.isfinite(loss):
                raise FloatingPointError(
                    f"non-finite loss at epoch {epoch}, batch {batch_no}"
                )
            ranger_step(fast, grads, state)
            epoch_loss += loss * len(idx)
        history.train_loss.append(epoch_loss / n)
        if val_set is not None:
            history.val_raw_mae.append(validation_raw_mae(params, val_set, cfg.batch_size))
        if verbose:
            val_part = (
                f"  val raw mae {history.val_raw_mae[-1]:.4f}" if val_set is not None else ""
            )
            print(
                f"epoch {epoch + 1}/{cfg.epochs}  train mae {history.train_loss[-1]:.4f}{val_part}",
                flush=True,
            )
    if cfg.out_path is not None:
        save_checkpoint(params, cfg.out_path)
    return params, history


def train_steps(
    params: ModelParams,
    train_set: Dataset,
    steps: int,
    batch_size: int,
    lr: float = 2e-4,
    seed: int = 0,
) -> list[float]:
    """Fixed-step training on a (usually tiny) set; returns per-step losses.

    Batches cycle deterministically through epochs of the usual shuffled
    order.  Used by capacity probes where a step budget, not an epoch
    count, is the knob.
    """
    fast = {name: params.tensors[name] for name in params.trainable_names()}
    state = init_opt_state(fast, RangerConfig(lr=lr))
    losses: list[float] = []
    n = train_set.n_samples
    epoch = 0
    order = _shuffled_indices(n, derive_stream(seed, 1 + epoch))
    cursor = 0
    for _ in range(steps):
        if cursor >= n:
            epoch += 1
            order = _shuffled_indices(n, derive_stream(seed, 1 + epoch))
            cursor = 0
        idx = order[cursor : cursor + batch_size]
        cursor += batch_size
        x = standardize(train_set.channels[idx], params.channel_mean, params.channel_std)
        loss, grads = model_backward(params, x, _truth_batch(train_set, idx), mode="train")
        if not math.isfinite(loss):
            raise FloatingPointError(f"non-finite loss at step {len(losses)}")
        ranger_step(fast, grads, state)
        losses.append(loss)
    return losses
