"""Dense layer kernels with hand-written backward passes.

Everything operates on [B, C, H, W] float arrays.  Convolutions run as
im2col + GEMM; the transposed convolution is implemented literally as
the adjoint of the convolution (col2im of a GEMM), which is what makes
the inner-product identity <conv(x,w), y> == <x, deconv(y,w)> hold to
rounding error.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "conv2d_forward",
    "conv2d_backward",
    "deconv2d_forward",
    "deconv2d_backward",
    "batchnorm_forward",
    "batchnorm_backward",
    "mish_forward",
    "mish_backward",
    "relu_forward",
    "relu_backward",
    "leaky_relu_forward",
    "leaky_relu_backward",
    "sigmoid_forward",
    "sigmoid_backward",
    "attention_forward",
    "attention_backward",
    "conv_out_extent",
    "deconv_out_extent",
]

LEAKY_SLOPE = 0.2
BN_MOMENTUM = 0.1
BN_EPS = 1e-5


def _pair(v) -> tuple[int, int]:
    if isinstance(v, (tuple, list)):
        return int(v[0]), int(v[1])
    return int(v), int(v)


def conv_out_extent(extent: int, k: int, s: int, p: int) -> int:
    out = (extent + 2 * p - k) // s + 1
    if out < 1:
        raise ValueError(f"conv output extent {out} < 1 (in={extent}, k={k}, s={s}, p={p})")
    return out


def deconv_out_extent(extent: int, k: int, s: int, p: int) -> int:
    out = (extent - 1) * s - 2 * p + k
    if out < 1:
        raise ValueError(f"deconv output extent {out} < 1 (in={extent}, k={k}, s={s}, p={p})")
    return out


def _im2col(x: np.ndarray, kh: int, kw: int, sh: int, sw: int, ph: int, pw: int) -> np.ndarray:
    """Patches of x as a [C*kh*kw, B*Ho*Wo] matrix."""
    b, c, h, w = x.shape
    ho = conv_out_extent(h, kh, sh, ph)
    wo = conv_out_extent(w, kw, sw, pw)
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if (ph or pw) else x
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, ::sh, ::sw]
    return win.transpose(1, 4, 5, 0, 2, 3).reshape(c * kh * kw, b * ho * wo)


def _col2im(
    cols: np.ndarray,
    shape: tuple[int, int, int, int],
    kh: int,
    kw: int,
    sh: int,
    sw: int,
    ph: int,
    pw: int,
) -> np.ndarray:
    """Adjoint of _im2col: scatter-add patch columns back onto the grid."""
    b, c, h, w = shape
    ho = conv_out_extent(h, kh, sh, ph)
    wo = conv_out_extent(w, kw, sw, pw)
    blocks = cols.reshape(c, kh, kw, b, ho, wo)
    xp = np.zeros((b, c, h + 2 * ph, w + 2 * pw), dtype=cols.dtype)
    for u in range(kh):
        for v in range(kw):
            xp[:, :, u : u + sh * ho : sh, v : v + sw * wo : sw] += blocks[:, u, v].transpose(
                1, 0, 2, 3
            )
    if ph or pw:
        return xp[:, :, ph : ph + h, pw : pw + w]
    return xp


def conv2d_forward(x: np.ndarray, w: np.ndarray, b, stride, pad) -> np.ndarray:
    """Cross-correlation of x [B,Cin,H,W] with w [Cout,Cin,kh,kw] plus bias."""
    sh, sw = _pair(stride)
    ph, pw = _pair(pad)
    bsz, cin, h, wd = x.shape
    cout, cin_w, kh, kw = w.shape
    if cin != cin_w:
        raise ValueError(f"conv channel mismatch: input {cin}, weight {cin_w}")
    ho = conv_out_extent(h, kh, sh, ph)
    wo = conv_out_extent(wd, kw, sw, pw)
    cols = _im2col(x, kh, kw, sh, sw, ph, pw)
    out = w.reshape(cout, -1) @ cols
    if b is not None:
        out += b[:, None]
    return out.reshape(cout, bsz, ho, wo).transpose(1, 0, 2, 3)


def conv2d_backward(dout: np.ndarray, x: np.ndarray, w: np.ndarray, stride, pad):
    """Gradients (dx, dw, db) of conv2d_forward."""
    sh, sw = _pair(stride)
    ph, pw = _pair(pad)
    cout, cin, kh, kw = w.shape
    dmat = dout.transpose(1, 0, 2, 3).reshape(cout, -1)
    cols = _im2col(x, kh, kw, sh, sw, ph, pw)
    dw = (dmat @ cols.T).reshape(w.shape)
    db = dout.sum(axis=(0, 2, 3))
    dx = _col2im(w.reshape(cout, -1).T @ dmat, x.shape, kh, kw, sh, sw, ph, pw)
    return dx, dw, db


def deconv2d_forward(x: np.ndarray, w: np.ndarray, b, stride, pad) -> np.ndarray:
    """Transposed convolution: x [B,Cin,H,W], w [Cin,Cout,kh,kw].

    Output extent (in-1)*s - 2p + k per axis.  Equivalent to the gradient
    of conv2d_forward w.r.t. its input, with the channel roles swapped.
    """
    sh, sw = _pair(stride)
    ph, pw = _pair(pad)
    bsz, cin, h, wd = x.shape
    cin_w, cout, kh, kw = w.shape
    if cin != cin_w:
        raise ValueError(f"deconv channel mismatch: input {cin}, weight {cin_w}")
    ho = deconv_out_extent(h, kh, sh, ph)
    wo = deconv_out_extent(wd, kw, sw, pw)
    xmat = x.transpose(1, 0, 2, 3).reshape(cin, -1)
    cols = w.reshape(cin, -1).T @ xmat
    out = _col2im(cols, (bsz, cout, ho, wo), kh, kw, sh, sw, ph, pw)
    if b is not None:
        out += b[None, :, None, None]
    return out


def deconv2d_backward(dout: np.ndarray, x: np.ndarray, w: np.ndarray, stride, pad):
    """Gradients (dx, dw, db) of deconv2d_forward."""
    sh, sw = _pair(stride)
    ph, pw = _pair(pad)
    cin, cout, kh, kw = w.shape
    bsz, _, h, wd = x.shape
    # Both gradients read patches of dout at the input-grid positions, so
    # one im2col feeds them: gathering those patches against w recovers
    # exactly the terms each input position scattered out (dx), and
    # correlating them with the input gives dw.
    cols = _im2col(dout, kh, kw, sh, sw, ph, pw)
    dx = (w.reshape(cin, -1) @ cols).reshape(cin, bsz, h, wd).transpose(1, 0, 2, 3)
    xmat = x.transpose(1, 0, 2, 3).reshape(cin, -1)
    dw = (xmat @ cols.T).reshape(w.shape)
    db = dout.sum(axis=(0, 2, 3))
    return dx, dw, db


def batchnorm_forward(
    x: np.ndarray,
    gain: np.ndarray,
    bias: np.ndarray,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    mode: str,
    momentum: float = BN_MOMENTUM,
    eps: float = BN_EPS,
    update_running: bool | None = None,
):
    """Per-channel normalization over the (B, H, W) pool.

    Train mode normalizes by biased batch statistics and (unless
    update_running is False) folds them into the running estimates
    in place; eval mode normalizes by the running estimates.

    Returns (out, cache) where cache feeds batchnorm_backward.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"bad batchnorm mode {mode!r}")
    g = gain[None, :, None, None]
    bz = bias[None, :, None, None]
    if mode == "eval":
        inv = 1.0 / np.sqrt(running_var[None, :, None, None] + eps)
        xhat = (x - running_mean[None, :, None, None]) * inv
        return xhat * g + bz, ("eval", xhat, inv, gain)
    pool = x.shape[0] * x.shape[2] * x.shape[3]
    if pool < 2:
        raise ValueError("batchnorm train mode needs a statistics pool of >= 2 values")
    mean = x.mean(axis=(0, 2, 3))
    var = x.var(axis=(0, 2, 3))
    if update_running is None or update_running:
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean
        running_var *= 1.0 - momentum
        running_var += momentum * var
    inv = 1.0 / np.sqrt(var[None, :, None, None] + eps)
    xhat = (x - mean[None, :, None, None]) * inv
    return xhat * g + bz, ("train", xhat, inv, gain)


def batchnorm_backward(dout: np.ndarray, cache):
    """Gradients (dx, dgain, dbias); train mode differentiates through the
    batch statistics, eval mode treats them as constants."""
    mode, xhat, inv, gain = cache
    dgain = (dout * xhat).sum(axis=(0, 2, 3))
    dbias = dout.sum(axis=(0, 2, 3))
    dxhat = dout * gain[None, :, None, None]
    if mode == "eval":
        return dxhat * inv, dgain, dbias
    n = dout.shape[0] * dout.shape[2] * dout.shape[3]
    sum_dxhat = dxhat.sum(axis=(0, 2, 3), keepdims=True)
    sum_dxhat_xhat = (dxhat * xhat).sum(axis=(0, 2, 3), keepdims=True)
    dx = inv / n * (n * dxhat - sum_dxhat - xhat * sum_dxhat_xhat)
    return dx, dgain, dbias


def _softplus(x: np.ndarray) -> np.ndarray:
    # log(1 + e^x) without overflow: max(x, 0) + log1p(e^{-|x|})
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def mish_forward(x: np.ndarray):
    t = np.tanh(_softplus(x))
    return x * t, (x, t)


def mish_backward(dout: np.ndarray, cache):
    x, t = cache
    sig = 1.0 / (1.0 + np.exp(-x))
    return dout * (t + x * (1.0 - t * t) * sig)


def relu_forward(x: np.ndarray):
    return np.maximum(x, 0.0), (x > 0.0)


def relu_backward(dout: np.ndarray, cache):
    return dout * cache


def leaky_relu_forward(x: np.ndarray, slope: float = LEAKY_SLOPE):
    mask = x > 0.0
    return np.where(mask, x, slope * x), (mask, slope)


def leaky_relu_backward(dout: np.ndarray, cache):
    mask, slope = cache
    return dout * np.where(mask, 1.0, slope)


def sigmoid_forward(x: np.ndarray):
    y = np.empty_like(x)
    pos = x >= 0.0
    y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    y[~pos] = ex / (1.0 + ex)
    return y, y


def sigmoid_backward(dout: np.ndarray, cache):
    y = cache
    return dout * y * (1.0 - y)


def attention_forward(x: np.ndarray):
    """Per-pixel softmax self-attention over the channel axis.

    out(i,j) = softmax(x(:,i,j)) . x(:,i,j), collapsing [B,K,H,W] to
    [B,1,H,W].  Max-subtraction keeps the exponentials in range.
    """
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    w = e / e.sum(axis=1, keepdims=True)
    out = (w * x).sum(axis=1, keepdims=True)
    return out, (x, w, out)


def attention_backward(dout: np.ndarray, cache):
    x, w, out = cache
    return dout * w * (1.0 + x - out)
