"""PGM output: single reconstructions and 4x8 comparison montages."""

from __future__ import annotations

import numpy as np

from ..simulate import PROFILE_H, PROFILE_W

GRID_ROWS = 4
GRID_COLS = 8
GRID_CAPACITY = GRID_ROWS * GRID_COLS
SEPARATOR = 2
SEPARATOR_GRAY = 128

MONTAGE_H = GRID_ROWS * PROFILE_H + (GRID_ROWS - 1) * SEPARATOR
MONTAGE_W = GRID_COLS * PROFILE_W + (GRID_COLS - 1) * SEPARATOR


def write_pgm(image: np.ndarray, path: str) -> None:
    """Binary PGM (P5, maxval 255) from a [H, W] uint8 array."""
    if image.ndim != 2 or image.dtype != np.uint8:
        raise ValueError("image must be 2-D uint8")
    h, w = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(image.tobytes())


def read_pgm(path: str) -> np.ndarray:
    """Inverse of write_pgm, for round-trip checks."""
    with open(path, "rb") as fh:
        data = fh.read()
    magic, dims, maxval, raw = data.split(b"\n", 3)
    if magic != b"P5" or maxval != b"255":
        raise ValueError(f"not a maxval-255 P5 file: {path}")
    w, h = (int(v) for v in dims.split())
    return np.frombuffer(raw[: h * w], dtype=np.uint8).reshape(h, w)


def _to_gray(profile: np.ndarray) -> np.ndarray:
    if profile.shape != (PROFILE_H, PROFILE_W):
        raise ValueError(f"profile must be {PROFILE_H}x{PROFILE_W}, got {profile.shape}")
    return np.rint(np.clip(profile, 0.0, 1.0) * 255.0).astype(np.uint8)


def montage_image(profiles) -> np.ndarray:
    """Lay out up to 32 profiles on a 4x8 grid with gray separators.

    Values are scaled 0 -> black, 1 -> white; missing tiles are blank
    (all-zero) so partial pages keep the fixed 166x110 geometry.
    """
    profiles = list(profiles)
    if len(profiles) > GRID_CAPACITY:
        raise ValueError(f"montage holds at most {GRID_CAPACITY} profiles, got {len(profiles)}")
    image = np.full((MONTAGE_H, MONTAGE_W), SEPARATOR_GRAY, dtype=np.uint8)
    blank = np.zeros((PROFILE_H, PROFILE_W))
    for slot in range(GRID_CAPACITY):
        tile = profiles[slot] if slot < len(profiles) else blank
        r, c = divmod(slot, GRID_COLS)
        y = r * (PROFILE_H + SEPARATOR)
        x = c * (PROFILE_W + SEPARATOR)
        image[y : y + PROFILE_H, x : x + PROFILE_W] = _to_gray(np.asarray(tile, dtype=np.float64))
    return image


def write_montage(profiles, path: str) -> None:
    write_pgm(montage_image(profiles), path)


def write_profile_pgm(profile: np.ndarray, path: str) -> None:
    """One 40x12 profile as a grayscale PGM (used by `reconstruct`)."""
    write_pgm(_to_gray(np.asarray(profile, dtype=np.float64)), path)
