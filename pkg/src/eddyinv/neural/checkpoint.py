"""Checkpoint files (.eck): variant tag, channel stats, named tensors.

Payloads are float32; in-memory parameters are float64, so a loaded
model holds exactly the float32-representable values and every
subsequent save/load round trip is byte-identical.
"""

from __future__ import annotations

import struct

import numpy as np

from ..errors import (
    BadMagicError,
    ShapeMismatchError,
    TruncatedFileError,
    UnsupportedVersionError,
    VariantMismatchError,
)
from .model import INPUT_CHANNELS, ModelParams, expected_shapes

_MAGIC = b"ECK1"
_VERSION = 1

_HEADER = struct.Struct("<4sIBII")
_STATS = struct.Struct("<12d")

_VARIANT_CODES = {"eddynet": 0, "nodec": 1, "relu": 2, "noattn": 3}
_CODE_VARIANTS = {v: k for k, v in _VARIANT_CODES.items()}


def save_checkpoint(params: ModelParams, path: str) -> None:
    parts = [
        _HEADER.pack(
            _MAGIC,
            _VERSION,
            _VARIANT_CODES[params.variant],
            params.width,
            params.attn_channels,
        ),
        _STATS.pack(*params.channel_mean, *params.channel_std),
        struct.pack("<I", len(params.tensors)),
    ]
    for name, tensor in params.tensors.items():
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<B", tensor.ndim))
        parts.append(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
        parts.append(tensor.astype("<f4").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def _take(buf: bytes, offset: int, size: int, what: str) -> tuple[bytes, int]:
    if offset + size > len(buf):
        raise TruncatedFileError(f"file ends inside {what}")
    return buf[offset : offset + size], offset + size


def load_checkpoint(path: str, expect_variant: str | None = None) -> ModelParams:
    """Load and validate a checkpoint against its variant's shape table.

    Rejects (without returning a partial model) wrong magic, unknown
    version, tensors missing/extra/mis-shaped for the declared variant,
    and, if ``expect_variant`` is given, a different variant tag.
    """
    with open(path, "rb") as fh:
        buf = fh.read()
    raw, off = _take(buf, 0, _HEADER.size, "header")
    magic, version, code, width, attn = _HEADER.unpack(raw)
    if magic != _MAGIC:
        raise BadMagicError(f"not a checkpoint file (magic {magic!r})")
    if version != _VERSION:
        raise UnsupportedVersionError(f"checkpoint version {version}, expected {_VERSION}")
    if code not in _CODE_VARIANTS:
        raise ShapeMismatchError(f"unknown variant code {code}")
    variant = _CODE_VARIANTS[code]
    if expect_variant is not None and variant != expect_variant:
        raise VariantMismatchError(f"checkpoint holds {variant!r}, expected {expect_variant!r}")
    raw, off = _take(buf, off, _STATS.size, "channel stats")
    stats = _STATS.unpack(raw)
    raw, off = _take(buf, off, 4, "tensor count")
    (count,) = struct.unpack("<I", raw)
    expected = expected_shapes(variant, width, attn)
    if count != len(expected):
        raise ShapeMismatchError(f"{count} tensors in file, {len(expected)} expected for {variant}")
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        raw, off = _take(buf, off, 2, "tensor name length")
        (name_len,) = struct.unpack("<H", raw)
        raw, off = _take(buf, off, name_len, "tensor name")
        name = raw.decode("utf-8")
        raw, off = _take(buf, off, 1, "tensor rank")
        rank = raw[0]
        raw, off = _take(buf, off, 4 * rank, "tensor extents")
        shape = struct.unpack(f"<{rank}I", raw)
        if expected.get(name) != shape:
            raise ShapeMismatchError(
                f"tensor {name!r} has shape {shape}, expected {expected.get(name)}"
            )
        size = 4 * int(np.prod(shape))
        raw, off = _take(buf, off, size, f"tensor {name!r} payload")
        tensors[name] = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(shape)
    missing = set(expected) - set(tensors)
    if missing:
        raise ShapeMismatchError(f"tensors missing from file: {sorted(missing)}")
    # Reorder to the canonical table order so save(load(x)) == x.
    ordered = {name: tensors[name] for name in expected}
    return ModelParams(
        variant=variant,
        width=width,
        attn_channels=attn,
        tensors=ordered,
        channel_mean=np.asarray(stats[:INPUT_CHANNELS]),
        channel_std=np.asarray(stats[INPUT_CHANNELS:]),
    )
