"""Density-map ground truth, losses, and the density branch.

The ground-truth prior places one isotropic Gaussian per annotated box,
sized by the box diagonal (sigma = half the diagonal), truncated at radius
ceil(3*sigma), and never renormalized, so each object contributes just
under unit mass.  Stamps are evaluated in object-local coordinates, which
makes integer translations of the input reproduce bit-identical maps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import autodiff as ad
from .errors import InvalidArgumentError
from .ops import as_tensor
from .params import ParamBundle, seeded_uniform


@dataclass
class BBoxAnnotation:
    """One ground-truth box, stored center-size in pixel coordinates."""
    image_id: int
    category_id: int
    cx: float
    cy: float
    width: float
    height: float
    score: Optional[float] = None

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise InvalidArgumentError(
                f"annotation (image {self.image_id}): non-positive box "
                f"{self.width}x{self.height}")

    @classmethod
    def from_xywh(cls, image_id, category_id, x, y, w, h, score=None):
        return cls(image_id, category_id, x + w / 2.0, y + h / 2.0, w, h, score)

    def to_xywh(self) -> tuple[float, float, float, float]:
        return (self.cx - self.width / 2.0, self.cy - self.height / 2.0,
                self.width, self.height)


@dataclass
class DensityMap:
    """A [1,H,W] non-negative map plus the count of annotations that were
    skipped because their center fell outside the grid."""
    values: np.ndarray
    skipped: int = 0

    def __post_init__(self):
        self.values = as_tensor(self.values, "density values")
        if self.values.ndim != 3 or self.values.shape[0] != 1:
            raise InvalidArgumentError(
                f"density map must be [1,H,W], got shape {self.values.shape}")

    def mass(self) -> float:
        return float(self.values.sum())


def density_values(d) -> np.ndarray:
    """Accept DensityMap, [1,H,W], or [H,W] and return a [1,H,W] array."""
    if isinstance(d, DensityMap):
        return d.values
    if isinstance(d, ad.Var):
        raise InvalidArgumentError("expected a concrete density map, got a graph node")
    arr = as_tensor(d, "density")
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3 or arr.shape[0] != 1:
        raise InvalidArgumentError(f"density map must be [1,H,W], got shape {arr.shape}")
    return arr


def object_sigma(width: float, height: float) -> float:
    """Gaussian scale for a box: half its diagonal."""
    return 0.5 * math.sqrt(width * width + height * height)


def gt_density(annotations: Sequence[BBoxAnnotation], height: int, width: int) -> DensityMap:
    """Render the ground-truth density prior for one image.

    Each annotation adds coef * exp(-(u^2+v^2) / (2 sigma^2)) over the pixel
    disk u^2+v^2 <= r^2 with r = ceil(3 sigma) and coef = 1/(2 pi sigma^2).
    The stamp is computed on a local grid that depends only on the center's
    fractional part, then pasted, so shifting every center by an integer
    offset shifts the map bit-exactly.
    """
    if height < 1 or width < 1:
        raise InvalidArgumentError(f"gt_density: bad extent {height}x{width}")
    out = np.zeros((1, height, width))
    skipped = 0
    for ann in annotations:
        cx, cy = float(ann.cx), float(ann.cy)
        if not (0.0 <= cx <= width - 1 and 0.0 <= cy <= height - 1):
            skipped += 1
            continue
        sigma = object_sigma(ann.width, ann.height)
        r = math.ceil(3.0 * sigma)
        ax, ay = math.floor(cx), math.floor(cy)
        fx, fy = cx - ax, cy - ay

        u = (np.arange(2 * r + 1, dtype=np.float64) - r) - fx
        v = (np.arange(2 * r + 1, dtype=np.float64) - r) - fy
        uu = u[None, :] ** 2
        vv = v[:, None] ** 2
        coef = 1.0 / (2.0 * math.pi * sigma * sigma)
        patch = coef * np.exp(-(uu + vv) / (2.0 * sigma * sigma))
        patch[uu + vv > r * r] = 0.0

        x_lo, x_hi = max(0, ax - r), min(width - 1, ax + r)
        y_lo, y_hi = max(0, ay - r), min(height - 1, ay + r)
        if x_lo > x_hi or y_lo > y_hi:
            skipped += 1
            continue
        px_lo, py_lo = x_lo - (ax - r), y_lo - (ay - r)
        out[0, y_lo:y_hi + 1, x_lo:x_hi + 1] += patch[
            py_lo:py_lo + (y_hi - y_lo + 1), px_lo:px_lo + (x_hi - x_lo + 1)]
    return DensityMap(out, skipped)


# ---------------------------------------------------------------------------
# losses

def _loss_operand(x):
    if isinstance(x, DensityMap):
        return x.values
    if isinstance(x, ad.Var):
        return x
    return as_tensor(x, "loss operand")


def density_loss(pred, gt):
    """Mean squared error between two equal-shape density maps.  Returns a
    scalar (0-d array, or Var when either side is a graph node)."""
    p, g = _loss_operand(pred), _loss_operand(gt)
    p_shape = p.value.shape if isinstance(p, ad.Var) else p.shape
    g_shape = g.value.shape if isinstance(g, ad.Var) else g.shape
    if p_shape != g_shape:
        raise InvalidArgumentError(
            f"density_loss: shape mismatch {p_shape} vs {g_shape}")
    diff = ad.subtract(p, g)
    return ad.mean_all(ad.multiply(diff, diff))


def total_loss(l_reg, l_cls, l_dense, weights=(1.0, 1.0, 1.0)):
    """Weighted sum of regression, classification, and density terms.
    Defaults to the plain unweighted sum; each term must be finite and
    non-negative."""
    if len(weights) != 3:
        raise InvalidArgumentError("total_loss: need exactly three weights")
    for w in weights:
        if not (math.isfinite(w) and w >= 0.0):
            raise InvalidArgumentError(f"total_loss: bad weight {w}")
    for name, term in zip(("regression", "classification", "density"),
                          (l_reg, l_cls, l_dense)):
        val = float(term.value) if isinstance(term, ad.Var) else float(term)
        if not (math.isfinite(val) and val >= 0.0):
            raise InvalidArgumentError(f"total_loss: {name} term is {val}")
    terms = [ad.scale(t, w) for t, w in zip((l_reg, l_cls, l_dense), weights)]
    return ad.add(ad.add(terms[0], terms[1]), terms[2])


# ---------------------------------------------------------------------------
# density generation branch (strided encoder, upsampling decoder, regressor)

@dataclass
class DgbConfig:
    encoder_stages: int = 3
    decoder_stages: int = 3
    base_channels: int = 8

    def __post_init__(self):
        if self.encoder_stages != self.decoder_stages:
            raise InvalidArgumentError(
                f"DgbConfig: encoder/decoder stage counts must match, got "
                f"{self.encoder_stages} vs {self.decoder_stages}")
        if self.encoder_stages < 1:
            raise InvalidArgumentError(
                f"DgbConfig: stages must be >= 1, got {self.encoder_stages}")
        if self.base_channels < 1:
            raise InvalidArgumentError(
                f"DgbConfig: base_channels must be >= 1, got {self.base_channels}")


def dgb_channel_plan(cfg: DgbConfig, in_channels: int):
    """(enc_in, enc_out) and (dec_in, dec_out) channel ladders."""
    enc = []
    cur = in_channels
    for i in range(cfg.encoder_stages):
        nxt = cfg.base_channels * (2 ** i)
        enc.append((cur, nxt))
        cur = nxt
    dec = []
    for _ in range(cfg.decoder_stages):
        nxt = max(cfg.base_channels, cur // 2)
        dec.append((cur, nxt))
        cur = nxt
    return enc, dec


def dgb_params(cfg: DgbConfig, in_channels: int, seed: int) -> ParamBundle:
    if in_channels < 1:
        raise InvalidArgumentError(f"dgb_params: in_channels must be >= 1, got {in_channels}")
    bundle = ParamBundle(seed)
    enc, dec = dgb_channel_plan(cfg, in_channels)
    for i, (ci, co) in enumerate(enc):
        bundle.uniform(f"enc{i}.w", (co, ci, 3, 3), ci * 9)
        bundle.uniform(f"enc{i}.b", (co,), ci * 9)
    for i, (ci, co) in enumerate(dec):
        bundle.uniform(f"dec{i}.w", (co, ci, 3, 3), ci * 9)
        bundle.uniform(f"dec{i}.b", (co,), ci * 9)
    bundle.uniform("reg.w", (1, cfg.base_channels, 3, 3), cfg.base_channels * 9)
    bundle.uniform("reg.b", (1,), cfg.base_channels * 9)
    return bundle


def dgb_forward(x, params, cfg: DgbConfig):
    """Predict a non-negative density map from [C,H,W] features.

    Encoder: strided 3x3 convs (stride 2, pad 1) + ReLU.
    Decoder: bilinear x2 upsample + 3x3 conv + ReLU per stage.
    Regressor: 3x3 conv to one channel + ReLU.
    H and W must be divisible by 2**encoder_stages.  Returns a DensityMap
    for concrete inputs, or the [1,H,W] graph node when differentiating.
    """
    xv = x.value if isinstance(x, ad.Var) else as_tensor(x, "dgb input")
    if xv.ndim != 3:
        raise InvalidArgumentError(f"dgb_forward: input must be [C,H,W], got {xv.shape}")
    h, w = xv.shape[1], xv.shape[2]
    factor = 2 ** cfg.encoder_stages
    if h % factor or w % factor:
        raise InvalidArgumentError(
            f"dgb_forward: {h}x{w} not divisible by 2^{cfg.encoder_stages}")
    cur = x
    for i in range(cfg.encoder_stages):
        cur = ad.relu(ad.conv2d(cur, params[f"enc{i}.w"], params[f"enc{i}.b"],
                                stride=2, pad=1))
    for i in range(cfg.decoder_stages):
        shape = cur.value.shape if isinstance(cur, ad.Var) else cur.shape
        cur = ad.bilinear_resize(cur, shape[1] * 2, shape[2] * 2)
        cur = ad.relu(ad.conv2d(cur, params[f"dec{i}.w"], params[f"dec{i}.b"],
                                stride=1, pad=1))
    out = ad.relu(ad.conv2d(cur, params["reg.w"], params["reg.b"], stride=1, pad=1))
    return out if isinstance(out, ad.Var) else DensityMap(out)


# ---------------------------------------------------------------------------
# density calibration: sigmoid(conv1x1(relu(conv3x3(D))))

@dataclass
class CalibParams:
    w1: object
    b1: object
    w2: object
    b2: object
    names: tuple = field(default=("w1", "b1", "w2", "b2"), repr=False)


def calib_params(seed: int, c_mid: int = 4) -> CalibParams:
    if c_mid < 1:
        raise InvalidArgumentError(f"calib_params: c_mid must be >= 1, got {c_mid}")
    return CalibParams(
        w1=seeded_uniform(seed, "calib.w1", (c_mid, 1, 3, 3), 9),
        b1=seeded_uniform(seed, "calib.b1", (c_mid,), 9),
        w2=seeded_uniform(seed, "calib.w2", (1, c_mid, 1, 1), c_mid),
        b2=seeded_uniform(seed, "calib.b2", (1,), c_mid),
    )


def calibrate_density(d, params: CalibParams):
    """Map a raw density prior to a calibrated (0,1) map of the same size.
    Returns a DensityMap for concrete inputs, a graph node otherwise."""
    dv = d if isinstance(d, ad.Var) else density_values(d)
    hidden = ad.relu(ad.conv2d(dv, params.w1, params.b1, stride=1, pad=1))
    out = ad.sigmoid(ad.conv2d(hidden, params.w2, params.b2, stride=1, pad=0))
    return out if isinstance(out, ad.Var) else DensityMap(out)
