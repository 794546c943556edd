"""Reverse-mode automatic differentiation over the ops in :mod:`.ops`.

A :class:`Var` wraps a float64 ndarray plus the tape links needed to run
vector-Jacobian products.  The functional wrappers below dispatch on input
type: plain ndarrays short-circuit to the raw numpy op, Vars record the op
on the tape.  Module forwards are therefore written once and work both as
fast inference code and as differentiable graphs.
"""

from __future__ import annotations

import numpy as np

from . import ops
from .errors import InvalidArgumentError, UnsupportedOperationError
from .rng import Rng


class Var:
    """Graph node: a value, an accumulated gradient, and parent links."""

    __slots__ = ("value", "grad", "_parents")

    def __init__(self, value, parents=()):
        self.value = ops.as_tensor(value, "Var value")
        self.grad = None
        self._parents = tuple(parents)

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def item(self) -> float:
        return float(self.value)

    def detach(self) -> np.ndarray:
        return self.value.copy()

    # convenience operators; the functional API below is the primary surface
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return subtract(self, other)

    def __rsub__(self, other):
        return subtract(other, self)

    def __mul__(self, other):
        return multiply(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Var(shape={self.value.shape}, grad={'set' if self.grad is not None else 'None'})"


def _value(x) -> np.ndarray:
    return x.value if isinstance(x, Var) else ops.as_tensor(x)


def _any_var(*xs) -> bool:
    return any(isinstance(x, Var) for x in xs)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# backward pass

def _topo_order(root: Var) -> list[Var]:
    order: list[Var] = []
    seen: set[int] = set()
    stack: list[tuple[Var, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent, _ in node._parents:
            stack.append((parent, False))
    return order


def backward(out: Var, cotangent=None) -> None:
    """Populate ``.grad`` on every node reachable from ``out``.

    Gradients from any previous backward over the same graph are cleared
    first, so each call gives fresh accumulations in a fixed order.
    """
    if not isinstance(out, Var):
        raise UnsupportedOperationError("backward: output is not a graph node")
    order = _topo_order(out)
    for node in order:
        node.grad = None
    if cotangent is None:
        ct = np.ones_like(out.value)
    else:
        ct = ops.as_tensor(cotangent, "cotangent")
        if ct.shape != out.value.shape:
            raise InvalidArgumentError(
                f"cotangent shape {ct.shape} != output shape {out.value.shape}")
    out.grad = ct
    for node in reversed(order):
        g = node.grad
        if g is None:
            continue
        for parent, vjp_fn in node._parents:
            contrib = vjp_fn(g)
            parent.grad = contrib if parent.grad is None else parent.grad + contrib


def vjp(out: Var, cotangent, wrt) -> list[np.ndarray]:
    """Vector-Jacobian product: gradients of ``<cotangent, out>`` w.r.t.
    each node in ``wrt`` (zeros where a node does not influence ``out``)."""
    backward(out, cotangent)
    return [w.grad if w.grad is not None else np.zeros_like(w.value) for w in wrt]


def grad_check(scalar_fn, point, eps: float = 1e-6, seed: int = 0,
               max_coords: int = 512) -> float:
    """Compare tape gradients of a scalar-valued function against central
    finite differences.

    ``point`` is one array or a sequence of arrays.  When the total number
    of coordinates exceeds ``max_coords``, a seeded subset is probed.
    Returns the maximum relative error max|analytic - numeric| /
    max(1e-8, |numeric|) over the probed coordinates.
    """
    if isinstance(point, np.ndarray) or np.isscalar(point):
        point = [point]
    arrays = [ops.as_tensor(p, f"point[{i}]").copy() for i, p in enumerate(point)]

    leaves = [Var(a.copy()) for a in arrays]
    out = scalar_fn(*leaves)
    if not isinstance(out, Var):
        raise UnsupportedOperationError("grad_check: function did not build a graph")
    if out.value.size != 1:
        raise InvalidArgumentError(
            f"grad_check: function must be scalar-valued, got shape {out.value.shape}")
    backward(out)
    analytic = [v.grad if v.grad is not None else np.zeros_like(v.value) for v in leaves]

    def eval_at(mod_arrays) -> float:
        res = scalar_fn(*[Var(a.copy()) for a in mod_arrays])
        return float(res.value)

    sizes = [a.size for a in arrays]
    total = sum(sizes)
    if total <= max_coords:
        coords = [(ai, flat) for ai, n in enumerate(sizes) for flat in range(n)]
    else:
        rng = Rng(seed)
        coords = []
        for _ in range(max_coords):
            flat = rng.randint(0, total - 1)
            ai = 0
            while flat >= sizes[ai]:
                flat -= sizes[ai]
                ai += 1
            coords.append((ai, flat))

    max_err = 0.0
    for ai, flat in coords:
        saved = arrays[ai].flat[flat]
        arrays[ai].flat[flat] = saved + eps
        f_plus = eval_at(arrays)
        arrays[ai].flat[flat] = saved - eps
        f_minus = eval_at(arrays)
        arrays[ai].flat[flat] = saved
        numeric = (f_plus - f_minus) / (2.0 * eps)
        an = float(analytic[ai].flat[flat])
        err = abs(an - numeric) / max(1e-8, abs(numeric))
        if err > max_err:
            max_err = err
    return max_err


# ---------------------------------------------------------------------------
# elementwise / structural primitives

def add(a, b):
    if not _any_var(a, b):
        return _value(a) + _value(b)
    av, bv = _value(a), _value(b)
    parents = []
    if isinstance(a, Var):
        parents.append((a, lambda g: _unbroadcast(g, av.shape)))
    if isinstance(b, Var):
        parents.append((b, lambda g: _unbroadcast(g, bv.shape)))
    return Var(av + bv, parents)


def subtract(a, b):
    if not _any_var(a, b):
        return _value(a) - _value(b)
    av, bv = _value(a), _value(b)
    parents = []
    if isinstance(a, Var):
        parents.append((a, lambda g: _unbroadcast(g, av.shape)))
    if isinstance(b, Var):
        parents.append((b, lambda g: _unbroadcast(-g, bv.shape)))
    return Var(av - bv, parents)


def multiply(a, b):
    if not _any_var(a, b):
        return _value(a) * _value(b)
    av, bv = _value(a), _value(b)
    parents = []
    if isinstance(a, Var):
        parents.append((a, lambda g: _unbroadcast(g * bv, av.shape)))
    if isinstance(b, Var):
        parents.append((b, lambda g: _unbroadcast(g * av, bv.shape)))
    return Var(av * bv, parents)


def scale(x, s: float):
    s = float(s)
    if not isinstance(x, Var):
        return _value(x) * s
    return Var(x.value * s, [(x, lambda g: g * s)])


def reshape(x, shape):
    if not isinstance(x, Var):
        return _value(x).reshape(shape)
    old = x.value.shape
    return Var(x.value.reshape(shape), [(x, lambda g: g.reshape(old))])


def transpose2d(x):
    if not isinstance(x, Var):
        v = _value(x)
        if v.ndim != 2:
            raise InvalidArgumentError(f"transpose2d: expected 2-D, got {v.shape}")
        return v.T.copy()
    if x.value.ndim != 2:
        raise InvalidArgumentError(f"transpose2d: expected 2-D, got {x.value.shape}")
    return Var(x.value.T.copy(), [(x, lambda g: g.T)])


def chw_to_rows(x):
    """[C,H,W] -> [H*W, C] row-major pixel rows."""
    if not isinstance(x, Var):
        v = ops.require_chw(_value(x), "chw_to_rows input")
        return np.ascontiguousarray(v.reshape(v.shape[0], -1).T)
    v = ops.require_chw(x.value, "chw_to_rows input")
    c, h, w = v.shape
    out = np.ascontiguousarray(v.reshape(c, h * w).T)
    return Var(out, [(x, lambda g: np.ascontiguousarray(g.T).reshape(c, h, w))])


def rows_to_chw(x, chw_shape):
    """[H*W, C] -> [C,H,W]; inverse of :func:`chw_to_rows`."""
    c, h, w = chw_shape
    if not isinstance(x, Var):
        v = _value(x)
        if v.shape != (h * w, c):
            raise InvalidArgumentError(f"rows_to_chw: shape {v.shape} != ({h * w},{c})")
        return np.ascontiguousarray(v.T).reshape(c, h, w)
    v = x.value
    if v.shape != (h * w, c):
        raise InvalidArgumentError(f"rows_to_chw: shape {v.shape} != ({h * w},{c})")
    out = np.ascontiguousarray(v.T).reshape(c, h, w)
    return Var(out, [(x, lambda g: np.ascontiguousarray(g.reshape(c, h * w).T))])


def concat_channels(a, b):
    if not _any_var(a, b):
        return np.concatenate([_value(a), _value(b)], axis=0)
    av, bv = _value(a), _value(b)
    ca = av.shape[0]
    parents = []
    if isinstance(a, Var):
        parents.append((a, lambda g: g[:ca]))
    if isinstance(b, Var):
        parents.append((b, lambda g: g[ca:]))
    return Var(np.concatenate([av, bv], axis=0), parents)


def sum_all(x):
    if not isinstance(x, Var):
        return np.asarray(_value(x).sum())
    shape = x.value.shape
    return Var(np.asarray(x.value.sum()), [(x, lambda g: np.full(shape, float(g)))])


def mean_all(x):
    if not isinstance(x, Var):
        return np.asarray(_value(x).mean())
    shape = x.value.shape
    n = x.value.size
    return Var(np.asarray(x.value.mean()),
               [(x, lambda g: np.full(shape, float(g) / n))])


def mean_axes(x, axes, keepdims: bool = False):
    axes = tuple(axes)
    if not isinstance(x, Var):
        return _value(x).mean(axis=axes, keepdims=keepdims)
    shape = x.value.shape
    count = 1
    for ax in axes:
        count *= shape[ax]

    def vjp_fn(g):
        gg = g if keepdims else np.expand_dims(g, axes)
        return np.broadcast_to(gg / count, shape).copy()

    return Var(x.value.mean(axis=axes, keepdims=keepdims), [(x, vjp_fn)])


def max_channels(x):
    """Channelwise max of a [C,H,W] map -> [1,H,W]; subgradient goes to the
    first attaining channel."""
    if not isinstance(x, Var):
        return _value(x).max(axis=0, keepdims=True)
    v = x.value
    idx = v.argmax(axis=0)

    def vjp_fn(g):
        dx = np.zeros_like(v)
        np.put_along_axis(dx, idx[None], g, axis=0)
        return dx

    return Var(v.max(axis=0, keepdims=True), [(x, vjp_fn)])


# ---------------------------------------------------------------------------
# activations

def sigmoid(x):
    if not isinstance(x, Var):
        return ops.sigmoid(x)
    out = ops.sigmoid(x.value)
    return Var(out, [(x, lambda g: g * out * (1.0 - out))])


def relu(x):
    if not isinstance(x, Var):
        return ops.relu(x)
    mask = x.value > 0.0
    return Var(ops.relu(x.value), [(x, lambda g: g * mask)])


def softmax(x, axis: int = -1):
    if not isinstance(x, Var):
        return ops.softmax(x, axis)
    out = ops.softmax(x.value, axis)

    def vjp_fn(g):
        return out * (g - (g * out).sum(axis=axis, keepdims=True))

    return Var(out, [(x, vjp_fn)])


# ---------------------------------------------------------------------------
# linear algebra

def matmul(a, b):
    if not _any_var(a, b):
        return ops.matmul(a, b)
    av, bv = _value(a), _value(b)
    out = ops.matmul(av, bv)
    parents = []
    if isinstance(a, Var):
        parents.append((a, lambda g: g @ bv.T))
    if isinstance(b, Var):
        parents.append((b, lambda g: av.T @ g))
    return Var(out, parents)


# ---------------------------------------------------------------------------
# convolution / pooling / resampling vjps

def _conv2d_vjp_x(g, weight, x_shape, stride, pad):
    c_out, c_in, kh, kw = weight.shape
    c, h, w = x_shape
    out_h, out_w = g.shape[1], g.shape[2]
    gp = np.zeros((c_in, h + 2 * pad, w + 2 * pad))
    for ky in range(kh):
        for kx in range(kw):
            contrib = np.tensordot(weight[:, :, ky, kx], g, axes=([0], [0]))
            gp[:, ky:ky + stride * out_h:stride, kx:kx + stride * out_w:stride] += contrib
    return gp[:, pad:pad + h, pad:pad + w]


def _conv2d_vjp_w(g, x, w_shape, stride, pad):
    c_out, c_in, kh, kw = w_shape
    c, h, w = x.shape
    out_h, out_w = g.shape[1], g.shape[2]
    if pad:
        xp = np.zeros((c, h + 2 * pad, w + 2 * pad))
        xp[:, pad:pad + h, pad:pad + w] = x
    else:
        xp = x
    dw = np.empty(w_shape)
    for ky in range(kh):
        for kx in range(kw):
            patch = xp[:, ky:ky + stride * out_h:stride, kx:kx + stride * out_w:stride]
            dw[:, :, ky, kx] = np.tensordot(g, patch, axes=([1, 2], [1, 2]))
    return dw


def conv2d(x, weight, bias=None, stride: int = 1, pad: int = 0):
    if not _any_var(x, weight, bias):
        return ops.conv2d(x, weight, bias, stride, pad)
    xv, wv = _value(x), _value(weight)
    bv = _value(bias) if bias is not None else None
    out = ops.conv2d(xv, wv, bv, stride, pad)
    parents = []
    if isinstance(x, Var):
        parents.append((x, lambda g: _conv2d_vjp_x(g, wv, xv.shape, stride, pad)))
    if isinstance(weight, Var):
        parents.append((weight, lambda g: _conv2d_vjp_w(g, xv, wv.shape, stride, pad)))
    if isinstance(bias, Var):
        parents.append((bias, lambda g: g.sum(axis=(1, 2))))
    return Var(out, parents)


def _avg_pool_vjp(g, x_shape, k, stride):
    c, h, w = x_shape
    out_h, out_w = g.shape[1], g.shape[2]
    pad_h = (out_h - 1) * stride + k - h
    pad_w = (out_w - 1) * stride + k - w
    share = g / (k * k)
    gp = np.zeros((c, h + pad_h, w + pad_w))
    for ky in range(k):
        for kx in range(k):
            gp[:, ky:ky + stride * out_h:stride, kx:kx + stride * out_w:stride] += share
    dx = gp[:, :h, :w].copy()
    # fold replicated-edge contributions back onto the last row/column
    if pad_h:
        dx[:, h - 1, :] += gp[:, h:, :w].sum(axis=1)
    if pad_w:
        dx[:, :, w - 1] += gp[:, :h, w:].sum(axis=2)
    if pad_h and pad_w:
        dx[:, h - 1, w - 1] += gp[:, h:, w:].sum(axis=(1, 2))
    return dx


def avg_pool(x, k: int, stride: int | None = None):
    if stride is None:
        stride = k
    if not isinstance(x, Var):
        return ops.avg_pool(x, k, stride)
    out = ops.avg_pool(x.value, k, stride)
    shape = x.value.shape
    return Var(out, [(x, lambda g: _avg_pool_vjp(g, shape, k, stride))])


def depthwise_separable_conv(x, dw_weight, pw_weight, pw_bias=None):
    if not _any_var(x, dw_weight, pw_weight, pw_bias):
        return ops.depthwise_separable_conv(x, dw_weight, pw_weight, pw_bias)
    mid = _depthwise(x, dw_weight)
    return conv2d(mid, pw_weight, pw_bias, stride=1, pad=0)


def _depthwise(x, dw_weight):
    """Depthwise 'same' stage as a standalone graph op."""
    xv, wv = _value(x), _value(dw_weight)
    c, h, w = xv.shape
    k = wv.shape[2]
    pad = (k - 1) // 2

    xp = np.zeros((c, h + 2 * pad, w + 2 * pad))
    xp[:, pad:pad + h, pad:pad + w] = xv
    out = np.zeros((c, h, w))
    for ky in range(k):
        for kx in range(k):
            out += wv[:, 0, ky, kx][:, None, None] * xp[:, ky:ky + h, kx:kx + w]

    if not _any_var(x, dw_weight):
        return out
    parents = []
    if isinstance(x, Var):
        def vjp_x(g):
            gp = np.zeros((c, h + 2 * pad, w + 2 * pad))
            for ky in range(k):
                for kx in range(k):
                    gp[:, ky:ky + h, kx:kx + w] += wv[:, 0, ky, kx][:, None, None] * g
            return gp[:, pad:pad + h, pad:pad + w]
        parents.append((x, vjp_x))
    if isinstance(dw_weight, Var):
        def vjp_w(g):
            dwg = np.empty_like(wv)
            for ky in range(k):
                for kx in range(k):
                    dwg[:, 0, ky, kx] = (g * xp[:, ky:ky + h, kx:kx + w]).sum(axis=(1, 2))
            return dwg
        parents.append((dw_weight, vjp_w))
    return Var(out, parents)


def _bilinear_vjp(g, x_shape, out_h, out_w):
    c, h, w = x_shape

    def axis_coords(n_in, n_out):
        if n_out == 1:
            src = np.array([0.5 * (n_in - 1)])
        else:
            src = np.arange(n_out, dtype=np.float64) * ((n_in - 1) / (n_out - 1))
        lo = np.clip(np.floor(src).astype(np.int64), 0, n_in - 1)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, src - lo

    y0, y1, fy = axis_coords(h, out_h)
    x0, x1, fx = axis_coords(w, out_w)
    wy0, wy1 = (1.0 - fy)[:, None], fy[:, None]
    wx0, wx1 = (1.0 - fx)[None, :], fx[None, :]
    dx = np.zeros(x_shape)
    for yi, wy in ((y0, wy0), (y1, wy1)):
        for xi, wx in ((x0, wx0), (x1, wx1)):
            np.add.at(dx, (slice(None), yi[:, None], xi[None, :]), g * (wy * wx))
    return dx


def bilinear_resize(x, out_h: int, out_w: int):
    if not isinstance(x, Var):
        return ops.bilinear_resize(x, out_h, out_w)
    out = ops.bilinear_resize(x.value, out_h, out_w)
    shape = x.value.shape
    if (out_h, out_w) == shape[1:]:
        return Var(out, [(x, lambda g: g)])
    return Var(out, [(x, lambda g: _bilinear_vjp(g, shape, out_h, out_w))])


# ---------------------------------------------------------------------------
# spectral

def dct2(x):
    if not isinstance(x, Var):
        return ops.dct2(x)
    return Var(ops.dct2(x.value), [(x, lambda g: ops.idct2(g))])


def idct2(x):
    if not isinstance(x, Var):
        return ops.idct2(x)
    return Var(ops.idct2(x.value), [(x, lambda g: ops.dct2(g))])


# ---------------------------------------------------------------------------
# attention blocks (composed from primitives so gradients flow)

def channel_attention(x, w_reduce, w_expand):
    if not _any_var(x, w_reduce, w_expand):
        return ops.channel_attention(x, w_reduce, w_expand)
    c = _value(x).shape[0]
    squeeze = reshape(mean_axes(x, (1, 2)), (c, 1))
    hidden = relu(matmul(w_reduce, squeeze))
    gate = sigmoid(matmul(w_expand, hidden))
    return multiply(x, reshape(gate, (c, 1, 1)))


def spatial_attention(x, w_conv):
    if not _any_var(x, w_conv):
        return ops.spatial_attention(x, w_conv)
    k = _value(w_conv).shape[2]
    stacked = concat_channels(mean_axes(x, (0,), keepdims=True), max_channels(x))
    gate = sigmoid(conv2d(stacked, w_conv, None, stride=1, pad=(k - 1) // 2))
    return multiply(x, gate)
