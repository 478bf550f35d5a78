"""The encoder-decoder network, its ablation variants, and their gradients.

The encoder squeezes the 6x40x40 scan channels through five strided
convolutions into a 128-vector; the decoder inflates that back to a
40x12 profile through five transposed convolutions, a softmax channel
attention over the last K feature maps, and a sigmoid.  Spatial chain
(any width C):

    6x40x40 -> 20x20 -> 10x10 -> 5x5 -> 2x2 -> 128x1x1
            -> 5x3 -> 10x6 -> 20x12 -> 40x12 -> Kx40x12 -> 1x40x12

Variants: ``eddynet`` (the full model), ``nodec`` (encoder only, a
480-vector reshaped to the profile), ``relu`` (ReLU encoder /
LeakyReLU(0.2) decoder instead of Mish), ``noattn`` (single output
channel, no attention).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..rng import Rng
from . import layers
from .layers import (
    attention_backward,
    attention_forward,
    batchnorm_backward,
    batchnorm_forward,
    conv2d_backward,
    conv2d_forward,
    deconv2d_backward,
    deconv2d_forward,
    leaky_relu_backward,
    leaky_relu_forward,
    mish_backward,
    mish_forward,
    relu_backward,
    relu_forward,
    sigmoid_backward,
    sigmoid_forward,
)

VARIANTS = ("eddynet", "nodec", "relu", "noattn")

INPUT_CHANNELS = 6
INPUT_HW = (40, 40)
OUTPUT_HW = (40, 12)
LATENT_DIM = 128
NODEC_LATENT = 480

WEIGHT_STD = 0.02
DEFAULT_WIDTH = 320
DEFAULT_ATTN = 20


@dataclass(frozen=True)
class LayerSpec:
    """One conv/deconv stage plus its optional batchnorm and activation."""

    name: str
    kind: str  # "conv" | "deconv"
    in_ch: int
    out_ch: int
    kernel: tuple[int, int]
    stride: tuple[int, int]
    pad: tuple[int, int]
    bn: bool
    act: str | None  # "mish" | "relu" | "leaky_relu" | None

    def out_hw(self, hw: tuple[int, int]) -> tuple[int, int]:
        fn = layers.conv_out_extent if self.kind == "conv" else layers.deconv_out_extent
        return (
            fn(hw[0], self.kernel[0], self.stride[0], self.pad[0]),
            fn(hw[1], self.kernel[1], self.stride[1], self.pad[1]),
        )

    def weight_shape(self) -> tuple[int, int, int, int]:
        if self.kind == "conv":
            return (self.out_ch, self.in_ch, *self.kernel)
        return (self.in_ch, self.out_ch, *self.kernel)


def architecture(variant: str, width: int, attn_channels: int) -> list[LayerSpec]:
    """Layer table for a variant at encoder/decoder width ``width``."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    c = width
    enc_act = "relu" if variant == "relu" else "mish"
    dec_act = "leaky_relu" if variant == "relu" else "mish"
    latent = NODEC_LATENT if variant == "nodec" else LATENT_DIM
    enc = [
        LayerSpec("e1", "conv", INPUT_CHANNELS, c, (6, 6), (2, 2), (2, 2), True, enc_act),
        LayerSpec("e2", "conv", c, c, (5, 5), (2, 2), (2, 2), True, enc_act),
        LayerSpec("e3", "conv", c, c, (4, 4), (2, 2), (1, 1), True, enc_act),
        LayerSpec("e4", "conv", c, c, (4, 4), (2, 2), (1, 1), True, enc_act),
        LayerSpec("e5", "conv", c, latent, (4, 4), (1, 1), (1, 1), False, None),
    ]
    if variant == "nodec":
        return enc
    head = 1 if variant == "noattn" else attn_channels
    dec = [
        LayerSpec("d1", "deconv", LATENT_DIM, c, (5, 3), (1, 1), (0, 0), True, dec_act),
        LayerSpec("d2", "deconv", c, c, (4, 4), (2, 2), (1, 1), True, dec_act),
        LayerSpec("d3", "deconv", c, c, (4, 4), (2, 2), (1, 1), True, dec_act),
        LayerSpec("d4", "deconv", c, c, (4, 3), (2, 1), (1, 1), True, dec_act),
        LayerSpec("d5", "deconv", c, head, (5, 5), (1, 1), (2, 2), False, None),
    ]
    return enc + dec


@dataclass
class ModelParams:
    """Named parameter tensors plus the input-standardization statistics.

    ``tensors`` maps "<layer>.w", "<layer>.b" and, for batchnormed
    layers, "<layer>.bn_gain" / "bn_bias" / "bn_mean" / "bn_var", in
    architecture order.  All arrays are float64 in memory; checkpoints
    store float32.
    """

    variant: str
    width: int
    attn_channels: int
    tensors: dict[str, np.ndarray]
    channel_mean: np.ndarray = field(default_factory=lambda: np.zeros(INPUT_CHANNELS))
    channel_std: np.ndarray = field(default_factory=lambda: np.ones(INPUT_CHANNELS))

    def specs(self) -> list[LayerSpec]:
        return architecture(self.variant, self.width, self.attn_channels)

    def trainable_names(self) -> list[str]:
        return [
            name
            for name in self.tensors
            if name.endswith((".w", ".b", ".bn_gain", ".bn_bias"))
        ]


def expected_shapes(variant: str, width: int, attn_channels: int) -> dict[str, tuple[int, ...]]:
    """Tensor-name -> shape table for a variant; checkpoint loads verify it."""
    shapes: dict[str, tuple[int, ...]] = {}
    for spec in architecture(variant, width, attn_channels):
        shapes[f"{spec.name}.w"] = spec.weight_shape()
        shapes[f"{spec.name}.b"] = (spec.out_ch,)
        if spec.bn:
            for suffix in ("bn_gain", "bn_bias", "bn_mean", "bn_var"):
                shapes[f"{spec.name}.{suffix}"] = (spec.out_ch,)
    return shapes


def init_params(variant: str, width: int, attn_channels: int, rng: Rng) -> ModelParams:
    """Fresh parameters in the documented draw order.

    Tensors are visited in architecture order; each gaussian-initialized
    tensor (conv/deconv weights at std 0.02, batchnorm gains at 1 +/-
    0.02) consumes one draw per element in row-major order.  Biases,
    running means and running variances consume no draws.
    """
    tensors: dict[str, np.ndarray] = {}

    def gaussian(shape: tuple[int, ...], loc: float, scale: float) -> np.ndarray:
        flat = np.empty(int(np.prod(shape)), dtype=np.float64)
        for i in range(flat.size):
            flat[i] = loc + scale * rng.next_gaussian()
        return flat.reshape(shape)

    for spec in architecture(variant, width, attn_channels):
        tensors[f"{spec.name}.w"] = gaussian(spec.weight_shape(), 0.0, WEIGHT_STD)
        tensors[f"{spec.name}.b"] = np.zeros(spec.out_ch)
        if spec.bn:
            tensors[f"{spec.name}.bn_gain"] = gaussian((spec.out_ch,), 1.0, WEIGHT_STD)
            tensors[f"{spec.name}.bn_bias"] = np.zeros(spec.out_ch)
            tensors[f"{spec.name}.bn_mean"] = np.zeros(spec.out_ch)
            tensors[f"{spec.name}.bn_var"] = np.ones(spec.out_ch)
    return ModelParams(variant, width, attn_channels, tensors)


def _check_batch(params: ModelParams, batch: np.ndarray) -> None:
    if batch.ndim != 4 or batch.shape[1:] != (INPUT_CHANNELS, *INPUT_HW):
        raise ValueError(
            f"batch must be [B, {INPUT_CHANNELS}, {INPUT_HW[0]}, {INPUT_HW[1]}], got {batch.shape}"
        )


_ACT = {
    "mish": (mish_forward, mish_backward),
    "relu": (relu_forward, relu_backward),
    "leaky_relu": (leaky_relu_forward, leaky_relu_backward),
}


def _forward(params: ModelParams, batch: np.ndarray, mode: str, update_running: bool | None):
    """Run the variant's table; returns (output, per-step cache list)."""
    _check_batch(params, batch)
    t = params.tensors
    steps = []
    x = batch
    for spec in params.specs():
        w = t[f"{spec.name}.w"]
        b = t[f"{spec.name}.b"]
        if spec.kind == "conv":
            out = conv2d_forward(x, w, b, spec.stride, spec.pad)
        else:
            out = deconv2d_forward(x, w, b, spec.stride, spec.pad)
        steps.append(("unit", spec, x))
        x = out
        if spec.bn:
            x, cache = batchnorm_forward(
                x,
                t[f"{spec.name}.bn_gain"],
                t[f"{spec.name}.bn_bias"],
                t[f"{spec.name}.bn_mean"],
                t[f"{spec.name}.bn_var"],
                mode,
                update_running=update_running,
            )
            steps.append(("bn", spec, cache))
        if spec.act is not None:
            x, cache = _ACT[spec.act][0](x)
            steps.append(("act", spec, cache))
    if params.variant == "nodec":
        x, cache = sigmoid_forward(x)
        steps.append(("sigmoid", None, cache))
        x = x.reshape(x.shape[0], 1, *OUTPUT_HW)
        steps.append(("reshape", None, None))
    else:
        if params.variant != "noattn":
            x, cache = attention_forward(x)
            steps.append(("attn", None, cache))
        x, cache = sigmoid_forward(x)
        steps.append(("sigmoid", None, cache))
    return x, steps


def model_forward(
    params: ModelParams,
    batch: np.ndarray,
    mode: str = "eval",
    update_running: bool | None = None,
) -> np.ndarray:
    """Profile predictions in (0,1), shape [B, 1, 40, 12].

    ``batch`` must already be standardized with the params' channel
    statistics.  Train mode uses batch statistics in the batchnorm
    layers (and updates the running estimates unless told not to).
    """
    out, _ = _forward(params, batch, mode, update_running)
    return out


def mae_loss(pred: np.ndarray, truth: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean absolute error per pixel and its gradient (sign(0) = 0)."""
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {truth.shape}")
    diff = pred - truth
    loss = float(np.abs(diff).mean())
    grad = np.sign(diff) / diff.size
    return loss, grad


def model_backward(
    params: ModelParams,
    batch: np.ndarray,
    truth: np.ndarray,
    mode: str = "train",
    update_running: bool | None = None,
) -> tuple[float, dict[str, np.ndarray]]:
    """Loss and exact gradients for every trainable tensor.

    The loss returned is the same forward pass model_forward would
    produce; gradients flow through the batch statistics and the
    attention softmax.
    """
    pred, steps = _forward(params, batch, mode, update_running)
    loss, dx = mae_loss(pred, truth)
    grads: dict[str, np.ndarray] = {}
    for kind, spec, cache in reversed(steps):
        if kind == "reshape":
            dx = dx.reshape(dx.shape[0], NODEC_LATENT, 1, 1)
        elif kind == "sigmoid":
            dx = sigmoid_backward(dx, cache)
        elif kind == "attn":
            dx = attention_backward(dx, cache)
        elif kind == "act":
            dx = _ACT[spec.act][1](dx, cache)
        elif kind == "bn":
            dx, dgain, dbias = batchnorm_backward(dx, cache)
            grads[f"{spec.name}.bn_gain"] = dgain
            grads[f"{spec.name}.bn_bias"] = dbias
        else:  # conv/deconv unit; cache is the layer input
            w = params.tensors[f"{spec.name}.w"]
            if spec.kind == "conv":
                dx, dw, db = conv2d_backward(dx, cache, w, spec.stride, spec.pad)
            else:
                dx, dw, db = deconv2d_backward(dx, cache, w, spec.stride, spec.pad)
            grads[f"{spec.name}.w"] = dw
            grads[f"{spec.name}.b"] = db
    return loss, grads


def layer_outputs(params: ModelParams, batch: np.ndarray, mode: str = "eval") -> dict[str, np.ndarray]:
    """Output of each conv/deconv stage (after bn/act), for shape checks."""
    _check_batch(params, batch)
    t = params.tensors
    outs: dict[str, np.ndarray] = {}
    x = batch
    for spec in params.specs():
        w = t[f"{spec.name}.w"]
        b = t[f"{spec.name}.b"]
        if spec.kind == "conv":
            x = conv2d_forward(x, w, b, spec.stride, spec.pad)
        else:
            x = deconv2d_forward(x, w, b, spec.stride, spec.pad)
        if spec.bn:
            x, _ = batchnorm_forward(
                x,
                t[f"{spec.name}.bn_gain"],
                t[f"{spec.name}.bn_bias"],
                t[f"{spec.name}.bn_mean"],
                t[f"{spec.name}.bn_var"],
                mode,
                update_running=False,
            )
        if spec.act is not None:
            x, _ = _ACT[spec.act][0](x)
        outs[spec.name] = x
    return outs
