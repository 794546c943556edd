"""Core numeric operations on [C, H, W] float64 feature maps.

Conventions that the rest of the library leans on:

* every tensor is a C-contiguous float64 ndarray, channel-first;
* convolution/pooling accumulate in a fixed order (kernel positions
  row-major, then input channels) so that naive triple-loop reference
  implementations reproduce the results bit for bit;
* the 2-D DCT is the orthonormal type-II transform applied per channel;
* operations that multiply-accumulate report their work to any active
  ``count_macs`` context, which is how the attention cost comparisons
  are measured rather than estimated.
"""

from __future__ import annotations

from contextlib import contextmanager
from functools import lru_cache

import numpy as np

from .errors import InvalidArgumentError


# ---------------------------------------------------------------------------
# multiply-accumulate counter

class MacCounter:
    __slots__ = ("macs",)

    def __init__(self):
        self.macs = 0


_ACTIVE_COUNTERS: list[MacCounter] = []


def _tally(n: int) -> None:
    if _ACTIVE_COUNTERS:
        for counter in _ACTIVE_COUNTERS:
            counter.macs += int(n)


@contextmanager
def count_macs():
    """Context manager yielding a counter of multiply-accumulates executed
    by ops in this module while the context is active.  Not thread-safe;
    intended for tests and cost reports."""
    counter = MacCounter()
    _ACTIVE_COUNTERS.append(counter)
    try:
        yield counter
    finally:
        _ACTIVE_COUNTERS.remove(counter)


# ---------------------------------------------------------------------------
# small validation helpers

def as_tensor(x, name: str = "tensor") -> np.ndarray:
    """Coerce to a float64 ndarray (no copy when already float64)."""
    try:
        arr = np.asarray(x, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise InvalidArgumentError(f"{name}: not convertible to float64 array") from exc
    return arr


def require_chw(x: np.ndarray, name: str = "tensor") -> np.ndarray:
    if x.ndim != 3:
        raise InvalidArgumentError(f"{name}: expected 3-D [C,H,W], got shape {x.shape}")
    if min(x.shape) < 1:
        raise InvalidArgumentError(f"{name}: zero extent in shape {x.shape}")
    return x


# ---------------------------------------------------------------------------
# resampling and pooling

def bilinear_resize(x, out_h: int, out_w: int) -> np.ndarray:
    """Align-corners bilinear resize of a [C,H,W] map to [C,out_h,out_w].

    Output values are convex combinations of the four surrounding input
    samples, so per-channel min/max bounds are preserved.  A same-size
    resize returns an identical copy.
    """
    x = require_chw(as_tensor(x, "resize input"), "resize input")
    if out_h < 1 or out_w < 1:
        raise InvalidArgumentError(f"resize: target extent must be >= 1, got {out_h}x{out_w}")
    c, h, w = x.shape
    if (out_h, out_w) == (h, w):
        return x.copy()

    def axis_coords(n_in, n_out):
        if n_out == 1:
            src = np.array([0.5 * (n_in - 1)])
        else:
            src = np.arange(n_out, dtype=np.float64) * ((n_in - 1) / (n_out - 1))
        lo = np.floor(src).astype(np.int64)
        lo = np.clip(lo, 0, n_in - 1)
        hi = np.minimum(lo + 1, n_in - 1)
        frac = src - lo
        return lo, hi, frac

    y0, y1, fy = axis_coords(h, out_h)
    x0, x1, fx = axis_coords(w, out_w)
    wy0, wy1 = (1.0 - fy)[:, None], fy[:, None]
    wx0, wx1 = (1.0 - fx)[None, :], fx[None, :]

    top = x[:, y0][:, :, x0] * (wy0 * wx0) + x[:, y0][:, :, x1] * (wy0 * wx1)
    bot = x[:, y1][:, :, x0] * (wy1 * wx0) + x[:, y1][:, :, x1] * (wy1 * wx1)
    _tally(4 * c * out_h * out_w)
    return top + bot


def pool_output_extent(n_in: int, k: int, stride: int) -> int:
    return (max(n_in - k, 0) + stride - 1) // stride + 1


def avg_pool(x, k: int, stride: int | None = None) -> np.ndarray:
    """Average pooling with edge-replication padding on the bottom/right so
    every window is full; divisor is always k*k.  Window contributions are
    accumulated kernel-position row-major for oracle bit-equality."""
    x = require_chw(as_tensor(x, "pool input"), "pool input")
    if k < 1:
        raise InvalidArgumentError(f"avg_pool: kernel must be >= 1, got {k}")
    if stride is None:
        stride = k
    if stride < 1:
        raise InvalidArgumentError(f"avg_pool: stride must be >= 1, got {stride}")
    c, h, w = x.shape
    out_h = pool_output_extent(h, k, stride)
    out_w = pool_output_extent(w, k, stride)
    pad_h = (out_h - 1) * stride + k - h
    pad_w = (out_w - 1) * stride + k - w
    xp = np.pad(x, ((0, 0), (0, pad_h), (0, pad_w)), mode="edge")

    acc = np.zeros((c, out_h, out_w))
    for ky in range(k):
        for kx in range(k):
            acc += xp[:, ky:ky + stride * out_h:stride, kx:kx + stride * out_w:stride]
    _tally(c * out_h * out_w * k * k)
    return acc / (k * k)


# ---------------------------------------------------------------------------
# convolution

def conv2d(x, weight, bias=None, stride: int = 1, pad: int = 0) -> np.ndarray:
    """2-D convolution (cross-correlation), zero padding.

    weight is [C_out, C_in, kh, kw]; accumulation order is kernel positions
    row-major, then input channels ascending, starting from the bias.
    """
    x = require_chw(as_tensor(x, "conv input"), "conv input")
    weight = as_tensor(weight, "conv weight")
    if weight.ndim != 4:
        raise InvalidArgumentError(f"conv2d: weight must be 4-D, got shape {weight.shape}")
    c_out, c_in, kh, kw = weight.shape
    if min(weight.shape) < 1:
        raise InvalidArgumentError(f"conv2d: zero extent in weight shape {weight.shape}")
    if stride < 1:
        raise InvalidArgumentError(f"conv2d: stride must be >= 1, got {stride}")
    if pad < 0:
        raise InvalidArgumentError(f"conv2d: pad must be >= 0, got {pad}")
    c, h, w = x.shape
    if c != c_in:
        raise InvalidArgumentError(f"conv2d: input has {c} channels, weight expects {c_in}")
    if h + 2 * pad < kh or w + 2 * pad < kw:
        raise InvalidArgumentError("conv2d: kernel larger than padded input")

    out_h = (h + 2 * pad - kh) // stride + 1
    out_w = (w + 2 * pad - kw) // stride + 1
    if pad:
        xp = np.zeros((c, h + 2 * pad, w + 2 * pad))
        xp[:, pad:pad + h, pad:pad + w] = x
    else:
        xp = x

    acc = np.empty((c_out, out_h, out_w))
    if bias is None:
        acc[:] = 0.0
    else:
        bias = as_tensor(bias, "conv bias")
        if bias.shape != (c_out,):
            raise InvalidArgumentError(f"conv2d: bias shape {bias.shape} != ({c_out},)")
        acc[:] = bias[:, None, None]
    for ky in range(kh):
        for kx in range(kw):
            patch = xp[:, ky:ky + stride * out_h:stride, kx:kx + stride * out_w:stride]
            for ci in range(c_in):
                acc += weight[:, ci, ky, kx][:, None, None] * patch[ci]
    _tally(c_out * out_h * out_w * c_in * kh * kw)
    return acc


def depthwise_separable_conv(x, dw_weight, pw_weight, pw_bias=None) -> np.ndarray:
    """Depthwise 'same' conv (odd kernel, stride 1) followed by a 1x1
    pointwise conv.  The depthwise stage equals per-channel single-channel
    conv2d calls bit for bit."""
    x = require_chw(as_tensor(x, "dsconv input"), "dsconv input")
    dw_weight = as_tensor(dw_weight, "depthwise weight")
    if dw_weight.ndim != 4 or dw_weight.shape[1] != 1:
        raise InvalidArgumentError(
            f"depthwise weight must be [C,1,k,k], got shape {dw_weight.shape}")
    c, h, w = x.shape
    if dw_weight.shape[0] != c:
        raise InvalidArgumentError(
            f"depthwise weight has {dw_weight.shape[0]} channels, input has {c}")
    k = dw_weight.shape[2]
    if dw_weight.shape[3] != k:
        raise InvalidArgumentError("depthwise kernel must be square")
    if k % 2 == 0:
        raise InvalidArgumentError(f"depthwise kernel must be odd, got {k}")
    pad = (k - 1) // 2

    xp = np.zeros((c, h + 2 * pad, w + 2 * pad))
    xp[:, pad:pad + h, pad:pad + w] = x
    mid = np.zeros((c, h, w))
    for ky in range(k):
        for kx in range(k):
            mid += dw_weight[:, 0, ky, kx][:, None, None] * xp[:, ky:ky + h, kx:kx + w]
    _tally(c * h * w * k * k)
    return conv2d(mid, pw_weight, pw_bias, stride=1, pad=0)


# ---------------------------------------------------------------------------
# activations

def sigmoid(x) -> np.ndarray:
    """Numerically stable logistic: exp is only ever taken of -|x|."""
    x = as_tensor(x, "sigmoid input")
    t = np.exp(-np.abs(x))
    return np.where(x >= 0.0, 1.0 / (1.0 + t), t / (1.0 + t))


def relu(x) -> np.ndarray:
    return np.maximum(as_tensor(x, "relu input"), 0.0)


def softmax(x, axis: int = -1) -> np.ndarray:
    """Max-shifted softmax; finite for inputs up to magnitude ~1e6."""
    x = as_tensor(x, "softmax input")
    if x.ndim == 0:
        raise InvalidArgumentError("softmax: scalar input has no axis")
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


# ---------------------------------------------------------------------------
# matrix product

def matmul(a, b) -> np.ndarray:
    a = as_tensor(a, "matmul lhs")
    b = as_tensor(b, "matmul rhs")
    if a.ndim != 2 or b.ndim != 2:
        raise InvalidArgumentError(
            f"matmul: expected 2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise InvalidArgumentError(f"matmul: inner dims differ, {a.shape} @ {b.shape}")
    _tally(a.shape[0] * a.shape[1] * b.shape[1])
    return a @ b


# ---------------------------------------------------------------------------
# orthonormal 2-D DCT, per channel

@lru_cache(maxsize=None)
def dct_matrix(n: int) -> np.ndarray:
    """Orthonormal type-II DCT matrix T with T @ T.T == I."""
    if n < 1:
        raise InvalidArgumentError(f"dct_matrix: size must be >= 1, got {n}")
    k = np.arange(n, dtype=np.float64)[:, None]
    j = np.arange(n, dtype=np.float64)[None, :]
    t = np.cos(np.pi * (2.0 * j + 1.0) * k / (2.0 * n)) * np.sqrt(2.0 / n)
    t[0, :] = np.sqrt(1.0 / n)
    t.setflags(write=False)
    return t


def dct2(x) -> np.ndarray:
    """Per-channel orthonormal 2-D DCT: T_H @ x_c @ T_W^T for each channel."""
    x = require_chw(as_tensor(x, "dct input"), "dct input")
    c, h, w = x.shape
    th = dct_matrix(h)
    tw = dct_matrix(w)
    _tally(c * (h * h * w + h * w * w))
    return th @ x @ tw.T


def idct2(x) -> np.ndarray:
    """Inverse of :func:`dct2` (exact up to rounding, since T is orthonormal)."""
    x = require_chw(as_tensor(x, "idct input"), "idct input")
    c, h, w = x.shape
    th = dct_matrix(h)
    tw = dct_matrix(w)
    _tally(c * (h * h * w + h * w * w))
    return th.T @ x @ tw


# ---------------------------------------------------------------------------
# attention building blocks

def channel_attention(x, w_reduce, w_expand) -> np.ndarray:
    """Squeeze-and-excitation channel gate.

    Global average -> linear (C -> mid) -> ReLU -> linear (mid -> C) ->
    sigmoid -> per-channel rescale of the input.
    """
    x = require_chw(as_tensor(x, "channel_attention input"), "channel_attention input")
    w_reduce = as_tensor(w_reduce, "w_reduce")
    w_expand = as_tensor(w_expand, "w_expand")
    c = x.shape[0]
    if w_reduce.ndim != 2 or w_reduce.shape[1] != c:
        raise InvalidArgumentError(
            f"channel_attention: w_reduce shape {w_reduce.shape} incompatible with C={c}")
    mid = w_reduce.shape[0]
    if w_expand.shape != (c, mid):
        raise InvalidArgumentError(
            f"channel_attention: w_expand shape {w_expand.shape} != ({c},{mid})")
    squeeze = x.mean(axis=(1, 2))
    hidden = np.maximum(w_reduce @ squeeze, 0.0)
    gate = sigmoid(w_expand @ hidden)
    _tally(mid * c + c * mid + x.size)
    return x * gate[:, None, None]


def spatial_attention(x, w_conv) -> np.ndarray:
    """Spatial gate: channel mean & max stacked into a 2-channel map, odd
    'same' conv to 1 channel, sigmoid, broadcast rescale."""
    x = require_chw(as_tensor(x, "spatial_attention input"), "spatial_attention input")
    w_conv = as_tensor(w_conv, "spatial conv weight")
    if w_conv.ndim != 4 or w_conv.shape[0] != 1 or w_conv.shape[1] != 2:
        raise InvalidArgumentError(
            f"spatial_attention: weight must be [1,2,k,k], got {w_conv.shape}")
    k = w_conv.shape[2]
    if w_conv.shape[3] != k or k % 2 == 0:
        raise InvalidArgumentError("spatial_attention: kernel must be square and odd")
    stacked = np.stack([x.mean(axis=0), x.max(axis=0)])
    gate = sigmoid(conv2d(stacked, w_conv, None, stride=1, pad=(k - 1) // 2))
    _tally(x.size)
    return x * gate
