"""Ranger: rectified-Adam inner steps wrapped in Lookahead averaging.

The inner update follows the rectification rule: once the variance of
the adaptive term is tractable (rho_t > 4) the step is scaled by r_t and
normalized by the bias-corrected second moment; before that it falls
back to plain bias-corrected momentum.  Every ``lookahead_k`` steps the
slow weights absorb half the fast weights' progress and the fast
weights snap back onto them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class RangerConfig:
    lr: float = 2e-4
    beta1: float = 0.95
    beta2: float = 0.999
    eps: float = 1e-5
    lookahead_k: int = 6
    lookahead_alpha: float = 0.5


@dataclass
class OptState:
    """Per-tensor moments, the slow-weight copies, and the step counter."""

    config: RangerConfig
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    slow: dict[str, np.ndarray]
    t: int = 0


def init_opt_state(tensors: dict[str, np.ndarray], config: RangerConfig | None = None) -> OptState:
    config = config or RangerConfig()
    return OptState(
        config=config,
        m={k: np.zeros_like(x) for k, x in tensors.items()},
        v={k: np.zeros_like(x) for k, x in tensors.items()},
        slow={k: x.copy() for k, x in tensors.items()},
    )


def _rectification(t: int, beta2: float) -> float | None:
    """r_t when rho_t > 4, else None (momentum-only branch)."""
    rho_inf = 2.0 / (1.0 - beta2) - 1.0
    beta2_t = beta2**t
    rho_t = rho_inf - 2.0 * t * beta2_t / (1.0 - beta2_t)
    if rho_t <= 4.0:
        return None
    return math.sqrt(
        ((rho_t - 4.0) * (rho_t - 2.0) * rho_inf)
        / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t)
    )


def radam_step(
    tensors: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: OptState,
) -> None:
    """One rectified-Adam update, in place on the fast weights."""
    cfg = state.config
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for {name!r}; step aborted")
    state.t += 1
    t = state.t
    b1, b2 = cfg.beta1, cfg.beta2
    r_t = _rectification(t, b2)
    m_corr = 1.0 - b1**t
    v_corr = 1.0 - b2**t
    for name, g in grads.items():
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / m_corr
        if r_t is None:
            tensors[name] -= cfg.lr * m_hat
        else:
            tensors[name] -= cfg.lr * r_t * m_hat / (np.sqrt(v / v_corr) + cfg.eps)


def lookahead_sync(tensors: dict[str, np.ndarray], state: OptState) -> None:
    """At sync points, interpolate the slow weights and reset the fast ones."""
    cfg = state.config
    if state.t % cfg.lookahead_k != 0:
        return
    for name, slow in state.slow.items():
        slow += cfg.lookahead_alpha * (tensors[name] - slow)
        tensors[name][...] = slow


def ranger_step(
    tensors: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: OptState,
) -> None:
    """The composite update: one radam_step, then the lookahead check."""
    radam_step(tensors, grads, state)
    lookahead_sync(tensors, state)
    for name in grads:
        if not np.all(np.isfinite(tensors[name])):
            raise FloatingPointError(f"non-finite values entered parameter {name!r}")
