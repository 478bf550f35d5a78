"""Dataset assembly, normalization statistics, and .ecd persistence.

A sample is one (profile, channels) pair: the 40x12 binary profile plus
its scan maps flattened to 6 real channels in the fixed order
[Re f1, Im f1, Re f2, Im f2, Re f3, Im f3].  Sample i depends only on
(seed, i, sim_config), so builds are reproducible byte-for-byte no
matter how many workers produced them.
"""

from __future__ import annotations

import multiprocessing
import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadMagicError,
    FormatError,
    ShapeMismatchError,
    TruncatedFileError,
    UnsupportedVersionError,
)
from .rng import derive_stream
from .simulate import (
    N_FREQ,
    PROFILE_H,
    PROFILE_W,
    SCAN_H,
    SCAN_W,
    SimConfig,
    forward_operate,
    generate_raw_profile,
    median_filter_3x3,
    with_calibration,
)

N_CHANNELS = 2 * N_FREQ

STANDARDIZE_EPS = 1e-8

_MAGIC = b"ECD1"
_VERSION = 1

_HEADER = struct.Struct("<4sIQIHHHHH")
_CONFIG = struct.Struct("<3dddHHd6d")
_STATS = struct.Struct("<12d")


@dataclass
class Dataset:
    """Stacked samples plus the config and seed that generated them.

    ``profiles`` is [n, 40, 12] float32 holding 0/1 values; ``channels``
    is [n, 6, 40, 40] float32.  Channel statistics stay None until
    computed from a training split.
    """

    profiles: np.ndarray
    channels: np.ndarray
    sim_config: SimConfig
    seed: int
    channel_mean: np.ndarray | None = None
    channel_std: np.ndarray | None = None

    @property
    def n_samples(self) -> int:
        return self.profiles.shape[0]

    def sample(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        return self.profiles[i], self.channels[i]


def channels_from_maps(values: np.ndarray) -> np.ndarray:
    """Interleave [3,40,40] complex maps into [6,40,40] float32."""
    out = np.empty((N_CHANNELS, SCAN_H, SCAN_W), dtype=np.float32)
    for k in range(N_FREQ):
        out[2 * k] = values[k].real.astype(np.float32)
        out[2 * k + 1] = values[k].imag.astype(np.float32)
    return out


def sample_for_index(seed: int, index: int, cfg: SimConfig) -> tuple[np.ndarray, np.ndarray]:
    """Build sample ``index``: raw bits -> median filter -> forward kernel."""
    rng = derive_stream(seed, index)
    profile = median_filter_3x3(generate_raw_profile(rng))
    maps = forward_operate(profile, cfg)
    return profile.astype(np.float32), channels_from_maps(maps.values)


_worker_args: tuple[int, SimConfig] | None = None


def _init_worker(seed: int, cfg: SimConfig) -> None:
    global _worker_args
    _worker_args = (seed, cfg)


def _build_one(index: int) -> tuple[np.ndarray, np.ndarray]:
    seed, cfg = _worker_args
    return sample_for_index(seed, index, cfg)


def build_dataset(n: int, seed: int, cfg: SimConfig, workers: int = 1) -> Dataset:
    """Generate n samples; identical output for any worker count.

    Calibrates cfg if the caller has not done so already.
    """
    if n < 1:
        raise ValueError("need at least one sample")
    if cfg.calibration is None:
        cfg = with_calibration(cfg)
    profiles = np.empty((n, PROFILE_H, PROFILE_W), dtype=np.float32)
    channels = np.empty((n, N_CHANNELS, SCAN_H, SCAN_W), dtype=np.float32)
    if workers <= 1:
        results = (sample_for_index(seed, i, cfg) for i in range(n))
    else:
        pool = multiprocessing.Pool(workers, initializer=_init_worker, initargs=(seed, cfg))
        try:
            results = pool.map(_build_one, range(n), chunksize=max(1, n // (4 * workers)))
        finally:
            pool.close()
            pool.join()
    for i, (p, c) in enumerate(results):
        profiles[i] = p
        channels[i] = c
    return Dataset(profiles=profiles, channels=channels, sim_config=cfg, seed=seed)


def split(dataset: Dataset, train_fraction: float) -> tuple[Dataset, Dataset]:
    """Prefix/suffix split; generation order is already i.i.d. so no shuffle."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must be in (0, 1)")
    k = int(dataset.n_samples * train_fraction)
    train = Dataset(dataset.profiles[:k], dataset.channels[:k], dataset.sim_config, dataset.seed)
    test = Dataset(dataset.profiles[k:], dataset.channels[k:], dataset.sim_config, dataset.seed)
    return train, test


def compute_channel_stats(train: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Per-channel mean and population std over all training pixels.

    Stored on the dataset and later baked into checkpoints; never
    recomputed at eval time.
    """
    if train.n_samples == 0:
        raise ValueError("cannot compute stats of an empty dataset")
    flat = train.channels.astype(np.float64).transpose(1, 0, 2, 3).reshape(N_CHANNELS, -1)
    mean = flat.mean(axis=1)
    std = flat.std(axis=1)
    train.channel_mean = mean
    train.channel_std = std
    return mean, std


def standardize(channels: np.ndarray, mean: np.ndarray, std: np.ndarray) -> np.ndarray:
    """x' = (x - mean_c) / (std_c + eps), in float64."""
    x = channels.astype(np.float64)
    return (x - mean[..., :, None, None]) / (std[..., :, None, None] + STANDARDIZE_EPS)


def save_dataset(dataset: Dataset, path: str) -> None:
    cfg = dataset.sim_config
    if cfg.calibration is None:
        raise ValueError("refusing to save a dataset with uncalibrated config")
    parts = [
        _HEADER.pack(
            _MAGIC,
            _VERSION,
            dataset.seed,
            dataset.n_samples,
            PROFILE_H,
            PROFILE_W,
            N_CHANNELS,
            SCAN_H,
            SCAN_W,
        ),
        _CONFIG.pack(
            *cfg.skin_depths_cells,
            cfg.sigma_y_cells,
            cfg.sigma_x_cells,
            cfg.crack_x_extent[0],
            cfg.crack_x_extent[1],
            cfg.gamma,
            *(v for c in cfg.calibration for v in (c.real, c.imag)),
        ),
    ]
    if dataset.channel_mean is not None and dataset.channel_std is not None:
        parts.append(b"\x01")
        parts.append(_STATS.pack(*dataset.channel_mean, *dataset.channel_std))
    else:
        parts.append(b"\x00")
    for i in range(dataset.n_samples):
        parts.append(dataset.profiles[i].astype("<f4").tobytes())
        parts.append(dataset.channels[i].astype("<f4").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def _take(buf: bytes, offset: int, size: int, what: str) -> tuple[bytes, int]:
    if offset + size > len(buf):
        raise TruncatedFileError(f"file ends inside {what}")
    return buf[offset : offset + size], offset + size


def load_dataset(path: str) -> Dataset:
    with open(path, "rb") as fh:
        buf = fh.read()
    raw, off = _take(buf, 0, _HEADER.size, "header")
    magic, version, seed, n, ph, pw, ch, rh, rw = _HEADER.unpack(raw)
    if magic != _MAGIC:
        raise BadMagicError(f"not a dataset file (magic {magic!r})")
    if version != _VERSION:
        raise UnsupportedVersionError(f"dataset format version {version}, expected {_VERSION}")
    if (ph, pw, ch, rh, rw) != (PROFILE_H, PROFILE_W, N_CHANNELS, SCAN_H, SCAN_W):
        raise ShapeMismatchError(f"unexpected geometry {(ph, pw, ch, rh, rw)}")
    raw, off = _take(buf, off, _CONFIG.size, "sim config")
    vals = _CONFIG.unpack(raw)
    cal = tuple(complex(vals[8 + 2 * k], vals[9 + 2 * k]) for k in range(3))
    cfg = SimConfig(
        skin_depths_cells=vals[0:3],
        sigma_y_cells=vals[3],
        sigma_x_cells=vals[4],
        crack_x_extent=(vals[5], vals[6]),
        gamma=vals[7],
        calibration=cal,
    )
    raw, off = _take(buf, off, 1, "stats flag")
    mean = std = None
    if raw == b"\x01":
        raw, off = _take(buf, off, _STATS.size, "channel stats")
        stats = _STATS.unpack(raw)
        mean = np.asarray(stats[:6], dtype=np.float64)
        std = np.asarray(stats[6:], dtype=np.float64)
    elif raw != b"\x00":
        raise FormatError(f"bad stats flag byte {raw!r}")
    profile_bytes = PROFILE_H * PROFILE_W * 4
    channel_bytes = N_CHANNELS * SCAN_H * SCAN_W * 4
    profiles = np.empty((n, PROFILE_H, PROFILE_W), dtype=np.float32)
    channels = np.empty((n, N_CHANNELS, SCAN_H, SCAN_W), dtype=np.float32)
    for i in range(n):
        raw, off = _take(buf, off, profile_bytes, f"sample {i} profile")
        profiles[i] = np.frombuffer(raw, dtype="<f4").reshape(PROFILE_H, PROFILE_W)
        raw, off = _take(buf, off, channel_bytes, f"sample {i} channels")
        channels[i] = np.frombuffer(raw, dtype="<f4").reshape(N_CHANNELS, SCAN_H, SCAN_W)
    return Dataset(
        profiles=profiles,
        channels=channels,
        sim_config=cfg,
        seed=seed,
        channel_mean=mean,
        channel_std=std,
    )
