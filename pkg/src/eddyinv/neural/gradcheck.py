"""Finite-difference verification of every analytic gradient.

Central differences at h=1e-4 in float64 against the hand-written
backward passes, layer by layer and through the composed model.  The
relative error uses max(|a|, |b|, 1e-8) as the denominator; anything
above 1e-4 is a failure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..rng import Rng, derive_stream
from . import layers
from .model import init_params, mae_loss, model_backward, model_forward

FD_STEP = 1e-4
TOLERANCE = 1e-4

# Elements checked per tensor in the composed-model pass; small tensors
# are checked exhaustively, large ones on an evenly strided subset.
MAX_ELEMENTS = 256


@dataclass
class CheckResult:
    name: str
    max_rel_err: float

    @property
    def ok(self) -> bool:
        return self.max_rel_err <= TOLERANCE


def _rel_err(a: np.ndarray, b: np.ndarray) -> float:
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)
    return float((np.abs(a - b) / denom).max())


def _randn(rng: Rng, shape: tuple[int, ...]) -> np.ndarray:
    flat = np.empty(int(np.prod(shape)))
    for i in range(flat.size):
        flat[i] = rng.next_gaussian()
    return flat.reshape(shape)


def _fd_on(loss_fn, tensor: np.ndarray, indices: np.ndarray) -> np.ndarray:
    """Central-difference d loss / d tensor.flat[indices]."""
    flat = tensor.reshape(-1)
    out = np.empty(indices.size)
    for pos, idx in enumerate(indices):
        saved = flat[idx]
        flat[idx] = saved + FD_STEP
        up = loss_fn()
        flat[idx] = saved - FD_STEP
        down = loss_fn()
        flat[idx] = saved
        out[pos] = (up - down) / (2.0 * FD_STEP)
    return out


def _pick_indices(size: int, limit: int) -> np.ndarray:
    if size <= limit:
        return np.arange(size)
    return np.unique(np.linspace(0, size - 1, limit).astype(np.int64))


def check_tensor(loss_fn, tensor: np.ndarray, analytic: np.ndarray, limit: int = MAX_ELEMENTS) -> float:
    idx = _pick_indices(tensor.size, limit)
    fd = _fd_on(loss_fn, tensor, idx)
    return _rel_err(fd, analytic.reshape(-1)[idx])


def _weighted_loss(out: np.ndarray, weights: np.ndarray) -> float:
    return float((out * weights).sum())


def check_conv2d(rng: Rng) -> list[CheckResult]:
    x = _randn(rng, (2, 3, 7, 7))
    w = _randn(rng, (4, 3, 3, 3)) * 0.5
    b = _randn(rng, (4,))
    weights = _randn(rng, (2, 4, 4, 4))

    def loss():
        return _weighted_loss(layers.conv2d_forward(x, w, b, 2, 1), weights)

    dx, dw, db = layers.conv2d_backward(weights, x, w, 2, 1)
    return [
        CheckResult("conv2d/x", check_tensor(loss, x, dx)),
        CheckResult("conv2d/w", check_tensor(loss, w, dw)),
        CheckResult("conv2d/b", check_tensor(loss, b, db)),
    ]


def check_deconv2d(rng: Rng) -> list[CheckResult]:
    x = _randn(rng, (2, 4, 3, 3))
    w = _randn(rng, (4, 3, 4, 3)) * 0.5
    b = _randn(rng, (3,))
    weights = _randn(rng, (2, 3, 6, 3))

    def loss():
        return _weighted_loss(layers.deconv2d_forward(x, w, b, (2, 1), (1, 1)), weights)

    dx, dw, db = layers.deconv2d_backward(weights, x, w, (2, 1), (1, 1))
    return [
        CheckResult("deconv2d/x", check_tensor(loss, x, dx)),
        CheckResult("deconv2d/w", check_tensor(loss, w, dw)),
        CheckResult("deconv2d/b", check_tensor(loss, b, db)),
    ]


def check_batchnorm(rng: Rng) -> list[CheckResult]:
    x = _randn(rng, (3, 4, 5, 5))
    gain = 1.0 + 0.1 * _randn(rng, (4,))
    bias = 0.1 * _randn(rng, (4,))
    weights = _randn(rng, (3, 4, 5, 5))
    results = []
    for mode in ("train", "eval"):
        rm = 0.1 * _randn(rng, (4,))
        rv = 1.0 + 0.1 * np.abs(_randn(rng, (4,)))

        def loss():
            out, _ = layers.batchnorm_forward(
                x, gain, bias, rm.copy(), rv.copy(), mode, update_running=False
            )
            return _weighted_loss(out, weights)

        out, cache = layers.batchnorm_forward(
            x, gain, bias, rm.copy(), rv.copy(), mode, update_running=False
        )
        dx, dgain, dbias = layers.batchnorm_backward(weights, cache)
        results += [
            CheckResult(f"batchnorm[{mode}]/x", check_tensor(loss, x, dx)),
            CheckResult(f"batchnorm[{mode}]/gain", check_tensor(loss, gain, dgain)),
            CheckResult(f"batchnorm[{mode}]/bias", check_tensor(loss, bias, dbias)),
        ]
    return results


def check_activations(rng: Rng) -> list[CheckResult]:
    x = _randn(rng, (2, 3, 4, 4)) * 2.0
    # keep clear of the relu kink, where the FD quotient is not the gradient
    x[np.abs(x) < 1e-2] += 0.05
    weights = _randn(rng, (2, 3, 4, 4))
    pairs = {
        "mish": (layers.mish_forward, layers.mish_backward),
        "relu": (layers.relu_forward, layers.relu_backward),
        "leaky_relu": (layers.leaky_relu_forward, layers.leaky_relu_backward),
        "sigmoid": (layers.sigmoid_forward, layers.sigmoid_backward),
    }
    results = []
    for name, (fwd, bwd) in pairs.items():

        def loss(fwd=fwd):
            return _weighted_loss(fwd(x)[0], weights)

        _, cache = fwd(x)
        results.append(CheckResult(f"{name}/x", check_tensor(loss, x, bwd(weights, cache))))
    return results


def check_attention(rng: Rng) -> list[CheckResult]:
    x = _randn(rng, (2, 5, 3, 4))
    weights = _randn(rng, (2, 1, 3, 4))

    def loss():
        return _weighted_loss(layers.attention_forward(x)[0], weights)

    _, cache = layers.attention_forward(x)
    dx = layers.attention_backward(weights, cache)
    return [CheckResult("attention/x", check_tensor(loss, x, dx))]


def check_composed_model(rng: Rng, variant: str = "eddynet") -> list[CheckResult]:
    """FD through mae(model(batch)) for every parameter tensor.

    Train mode with frozen running stats, so the batch-statistics path
    of batchnorm is part of the graph and each evaluation is pure.

    Two conditioning steps keep the check meaningful at h=1e-4.  The
    training-scale init (std 0.02) leaves batchnorm dividing by tiny
    batch stds, whose curvature swamps central differences with O(h^2)
    truncation error, so weights are rescaled to unit-variance
    (1/sqrt(fan)) signals first.  And MAE's |.| kink makes FD
    unreliable when a pred-truth residual sits within reach of zero, so
    truth is placed a fixed 0.4 away from each unperturbed prediction.
    """
    params = init_params(variant, 4, 3, rng)
    for spec in params.specs():
        fan = spec.in_ch * spec.kernel[0] * spec.kernel[1]
        if spec.kind == "deconv":
            fan = max(1, fan // (spec.stride[0] * spec.stride[1]))
        params.tensors[f"{spec.name}.w"] *= (1.0 / np.sqrt(fan)) / 0.02
    batch = _randn(rng, (2, 6, 40, 40))
    base = model_forward(params, batch, "train", update_running=False)
    offsets = np.where(_randn(rng, base.shape) > 0.0, 0.4, -0.4)
    truth = base + offsets

    def loss():
        return mae_loss(model_forward(params, batch, "train", update_running=False), truth)[0]

    _, grads = model_backward(params, batch, truth, "train", update_running=False)
    results = []
    for name in params.trainable_names():
        err = check_tensor(loss, params.tensors[name], grads[name])
        results.append(CheckResult(f"{variant}/{name}", err))
    return results


def run_all(seed: int = 2024) -> list[CheckResult]:
    rng = derive_stream(seed, 0)
    results: list[CheckResult] = []
    results += check_conv2d(rng)
    results += check_deconv2d(rng)
    results += check_batchnorm(rng)
    results += check_activations(rng)
    results += check_attention(rng)
    results += check_composed_model(rng)
    return results
