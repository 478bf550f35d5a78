"""Crack profiles and their simulated eddy-current scan maps.

A profile is a 40x12 binary occupancy grid in the (y, depth) plane,
uniform along x.  The scanner reads a 40x40 map of complex impedance
variation at three frequencies.  The forward kernel here is a Born-style
surrogate: each crack cell contributes the square of the incident field
decayed by the complex skin depth of its frequency, spread laterally by
a Gaussian coil footprint, and attenuated by the crack cells stacked
above it (shadowing), which is what makes the map a nonlinear function
of the profile.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .rng import Rng

PROFILE_H = 40  # y rows, aligned 1:1 with the scan-y grid
PROFILE_W = 12  # depth cells, 0 = surface
SCAN_H = 40  # scan-x positions
SCAN_W = 40  # scan-y positions
N_FREQ = 3

# Metadata only: nominal drive frequencies consistent with the default
# skin-depth ratios (delta ~ 1/sqrt(f)).
DEFAULT_FREQUENCIES_HZ = (1000.0, 4000.0, 16000.0)


@dataclass(frozen=True)
class SimConfig:
    """Constants of the surrogate forward kernel, in depth-cell units.

    ``calibration`` holds one complex scale per frequency that brings the
    peak all-ones response to magnitude 1; it starts unset and is filled
    in by :func:`calibrate` / :func:`with_calibration`.
    """

    skin_depths_cells: tuple[float, float, float] = (6.0, 3.0, 1.5)
    sigma_y_cells: float = 3.0
    sigma_x_cells: float = 3.0
    crack_x_extent: tuple[int, int] = (10, 30)  # half-open on scan-x
    gamma: float = 0.15
    calibration: tuple[complex, complex, complex] | None = None

    def __post_init__(self):
        d1, d2, d3 = self.skin_depths_cells
        if not (d1 > d2 > d3 > 0.0):
            raise ValueError("skin depths must be strictly decreasing and positive")
        x0, x1 = self.crack_x_extent
        if not (0 <= x0 < x1 <= SCAN_H):
            raise ValueError(f"crack_x_extent {self.crack_x_extent} outside [0, {SCAN_H})")
        if self.gamma < 0.0:
            raise ValueError("gamma must be >= 0")


@dataclass(frozen=True)
class ResponseMaps:
    """Complex scan maps, one 40x40 grid per frequency ([k, i, j])."""

    values: np.ndarray
    frequencies_hz: tuple[float, float, float] = DEFAULT_FREQUENCIES_HZ


def generate_raw_profile(rng: Rng) -> np.ndarray:
    """Unsmoothed random profile: one bit per cell, row-major draw order.

    Cell (m, n) takes the high bit of the m*12+n'th u64, so the grid is
    fully determined by the generator's starting state.
    """
    bits = np.empty(PROFILE_H * PROFILE_W, dtype=np.uint8)
    for idx in range(PROFILE_H * PROFILE_W):
        bits[idx] = rng.next_u64() >> 63
    return bits.reshape(PROFILE_H, PROFILE_W)


def median_filter_3x3(profile: np.ndarray) -> np.ndarray:
    """Majority vote over the clipped 3x3 window around each cell.

    Border windows shrink to 6 or 4 cells instead of picking up phantom
    padding.  A tie (only possible at borders, where the window has an
    even cell count) keeps the center value, so constant fields are
    exact fixed points.
    """
    p = np.asarray(profile)
    _check_profile(p)
    ones = np.zeros(p.shape, dtype=np.int32)
    cnt = np.zeros(p.shape, dtype=np.int32)
    h, w = p.shape
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            ys = slice(max(dy, 0), h + min(dy, 0))
            yd = slice(max(-dy, 0), h + min(-dy, 0))
            xs = slice(max(dx, 0), w + min(dx, 0))
            xd = slice(max(-dx, 0), w + min(-dx, 0))
            ones[yd, xd] += p[ys, xs]
            cnt[yd, xd] += 1
    out = np.where(2 * ones > cnt, 1, np.where(2 * ones < cnt, 0, p))
    return out.astype(np.uint8)


def _check_profile(p: np.ndarray) -> None:
    if p.shape != (PROFILE_H, PROFILE_W):
        raise ValueError(f"profile must be {PROFILE_H}x{PROFILE_W}, got {p.shape}")


def shadow_factors(profile: np.ndarray, gamma: float) -> np.ndarray:
    """Per-cell attenuation exp(-gamma * number of crack cells above).

    "Above" means shallower depth in the same y row.  Factors are 1.0
    exactly for cells with nothing above them, and <= 1 everywhere for
    gamma >= 0.
    """
    p = np.asarray(profile, dtype=np.float64)
    above = np.zeros_like(p)
    above[:, 1:] = np.cumsum(p, axis=1)[:, :-1]
    return np.exp(-gamma * above)


def _depth_kernels(cfg: SimConfig) -> np.ndarray:
    """Complex decay per (frequency, depth cell): exp(-2(1+i)(n+0.5)/delta)."""
    depths = np.arange(PROFILE_W, dtype=np.float64) + 0.5
    deltas = np.asarray(cfg.skin_depths_cells, dtype=np.float64)
    return np.exp(-2.0 * (1.0 + 1.0j) * depths[None, :] / deltas[:, None])


def _lateral_kernel(cfg: SimConfig) -> np.ndarray:
    """Gaussian coupling between scan-y position j and profile row m."""
    j = np.arange(SCAN_W, dtype=np.float64)
    m = np.arange(PROFILE_H, dtype=np.float64)
    return np.exp(-((j[:, None] - m[None, :]) ** 2) / (2.0 * cfg.sigma_y_cells**2))


def _footprint(cfg: SimConfig) -> np.ndarray:
    """Coil footprint along scan-x summed over the crack's x extent."""
    i = np.arange(SCAN_H, dtype=np.float64)
    x0, x1 = cfg.crack_x_extent
    u = np.arange(x0, x1, dtype=np.float64)
    return np.exp(-((i[:, None] - u[None, :]) ** 2) / (2.0 * cfg.sigma_x_cells**2)).sum(axis=1)


def _raw_response(profile: np.ndarray, cfg: SimConfig, gamma: float) -> np.ndarray:
    """Uncalibrated maps: -A_x(i) * sum over cells of the decay terms."""
    w = np.asarray(profile, dtype=np.float64) * shadow_factors(profile, gamma)
    depth = _depth_kernels(cfg)  # [3, 12]
    row_sums = w @ depth.T  # [40 rows, 3]
    lateral = _lateral_kernel(cfg)  # [40 j, 40 m]
    per_j = lateral @ row_sums  # [40 j, 3]
    ax = _footprint(cfg)  # [40 i]
    return -(ax[None, :, None] * per_j.T[:, None, :])  # [3, i, j]


def calibrate(cfg: SimConfig) -> tuple[complex, complex, complex]:
    """Per-frequency real scales 1/M_k, where M_k is the peak magnitude of
    the all-ones profile with shadowing off.  Responses come out O(1)."""
    ones = np.ones((PROFILE_H, PROFILE_W), dtype=np.uint8)
    raw = _raw_response(ones, cfg, gamma=0.0)
    peaks = np.abs(raw).max(axis=(1, 2))
    return tuple(complex(1.0 / m) for m in peaks)


def with_calibration(cfg: SimConfig) -> SimConfig:
    return replace(cfg, calibration=calibrate(cfg))


def forward_operate(profile: np.ndarray, cfg: SimConfig) -> ResponseMaps:
    """Scan maps of one profile under the surrogate kernel.

    Pure function of (profile, cfg); cfg.calibration must be populated.
    """
    p = np.asarray(profile)
    _check_profile(p)
    if cfg.calibration is None:
        raise ValueError("SimConfig.calibration not populated; call with_calibration first")
    raw = _raw_response(p, cfg, cfg.gamma)
    cal = np.asarray(cfg.calibration, dtype=np.complex128)
    return ResponseMaps(values=raw * cal[:, None, None])
