"""On-disk formats: the binary tensor container, PGM heatmaps, and the
COCO-subset annotation JSON.

Tensor container layout (all little-endian):
  bytes 0-3   magic "DRMT"
  byte  4     version, currently 1
  byte  5     dtype code, 0 = float64
  byte  6     ndim
  then        ndim x uint32 dims
  then        row-major float64 payload, 8 * prod(dims) bytes
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .density import BBoxAnnotation
from .errors import FormatError, InvalidArgumentError
from .evalkit import Detection
from .ops import as_tensor

MAGIC = b"DRMT"
VERSION = 1
DTYPE_F64 = 0


def write_tensor(path, tensor) -> None:
    arr = as_tensor(tensor, "tensor")
    if arr.ndim > 255:
        raise InvalidArgumentError(f"write_tensor: ndim {arr.ndim} exceeds 255")
    for d in arr.shape:
        if d >= 2 ** 32:
            raise InvalidArgumentError(f"write_tensor: dim {d} exceeds uint32")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(bytes([VERSION, DTYPE_F64, arr.ndim]))
        f.write(struct.pack("<%dI" % arr.ndim, *arr.shape))
        f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_tensor(path) -> np.ndarray:
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 7:
        raise FormatError(f"tensor file truncated at byte {len(blob)} (header needs 7)")
    if blob[0:4] != MAGIC:
        raise FormatError("bad magic at byte 0")
    if blob[4] != VERSION:
        raise FormatError(f"unsupported version {blob[4]} at byte 4")
    if blob[5] != DTYPE_F64:
        raise FormatError(f"unsupported dtype code {blob[5]} at byte 5")
    ndim = blob[6]
    off = 7
    if len(blob) < off + 4 * ndim:
        raise FormatError(f"truncated dims at byte {len(blob)}")
    dims = struct.unpack_from("<%dI" % ndim, blob, off) if ndim else ()
    off += 4 * ndim
    count = 1
    for d in dims:
        count *= d
    if count > (1 << 40):
        raise FormatError(f"dim overflow at byte 7: product {count}")
    expected = 8 * count
    if len(blob) - off != expected:
        raise FormatError(
            f"payload length {len(blob) - off} != {expected} at byte {off}")
    arr = np.frombuffer(blob, dtype="<f8", count=count, offset=off)
    return arr.reshape(dims).astype(np.float64, copy=True)


def write_heatmap(path, density_map) -> None:
    """Min-max normalize a [1,H,W] (or [H,W]) map to 8-bit and write binary
    PGM (P5).  Constant maps emit mid-gray 128."""
    arr = as_tensor(density_map, "heatmap")
    if arr.ndim == 3:
        if arr.shape[0] != 1:
            raise InvalidArgumentError(f"write_heatmap: need [1,H,W], got {arr.shape}")
        arr = arr[0]
    if arr.ndim != 2:
        raise InvalidArgumentError(f"write_heatmap: bad rank {arr.ndim}")
    lo, hi = float(arr.min()), float(arr.max())
    if hi > lo:
        scaled = np.rint((arr - lo) / (hi - lo) * 255.0)
        pixels = np.clip(scaled, 0, 255).astype(np.uint8)
    else:
        pixels = np.full(arr.shape, 128, dtype=np.uint8)
    h, w = arr.shape
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (w, h))
        f.write(pixels.tobytes())


# ---------------------------------------------------------------------------
# annotation JSON (COCO subset)

def _clamp_box(x, y, w, h, img_w, img_h):
    x0, y0 = max(0.0, x), max(0.0, y)
    x1, y1 = min(float(img_w), x + w), min(float(img_h), y + h)
    return x0, y0, x1 - x0, y1 - y0


def load_annotation_file(path):
    """Parse and validate an annotation JSON.

    Returns (images, annotations, detections): ``images`` maps id ->
    {width, height, file_name}; annotations are clamped to image bounds at
    ingestion and must stay positive-area; entries carrying a score also
    appear in ``detections``.
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
    except json.JSONDecodeError as exc:
        raise FormatError(f"annotation file {path}: invalid JSON ({exc})") from exc
    for section in ("images", "annotations", "categories"):
        if section not in doc or not isinstance(doc[section], list):
            raise FormatError(f"annotation file {path}: missing list {section!r}")

    images = {}
    for im in doc["images"]:
        images[im["id"]] = {"width": im["width"], "height": im["height"],
                            "file_name": im.get("file_name", "")}
    category_ids = {c["id"] for c in doc["categories"]}

    annotations = []
    detections = []
    for ann in doc["annotations"]:
        aid = ann.get("id", "?")
        img_id = ann["image_id"]
        if img_id not in images:
            raise FormatError(
                f"annotation {aid}: dangling image_id {img_id}")
        if ann["category_id"] not in category_ids:
            raise FormatError(
                f"annotation {aid}: dangling category_id {ann['category_id']}")
        x, y, w, h = (float(v) for v in ann["bbox"])
        if w <= 0 or h <= 0:
            raise FormatError(f"annotation {aid}: non-positive bbox extents")
        img = images[img_id]
        x, y, w, h = _clamp_box(x, y, w, h, img["width"], img["height"])
        if w <= 0 or h <= 0:
            raise FormatError(f"annotation {aid}: bbox fully outside image")
        score = ann.get("score")
        annotations.append(BBoxAnnotation.from_xywh(
            img_id, ann["category_id"], x, y, w, h, score))
        if score is not None:
            detections.append(Detection(img_id, ann["category_id"],
                                        (x, y, w, h), float(score)))
    return images, annotations, detections


def save_annotation_file(path, images: dict, annotations) -> None:
    """Write the COCO-subset JSON.  ``annotations`` may mix BBoxAnnotation
    (score optional) and Detection (score required)."""
    ann_records = []
    cats = set()
    for i, a in enumerate(annotations, start=1):
        if isinstance(a, Detection):
            x, y, w, h = a.bbox
            rec = {"id": i, "image_id": a.image_id, "category_id": a.category_id,
                   "bbox": [x, y, w, h], "score": a.score}
        else:
            x, y, w, h = a.to_xywh()
            rec = {"id": i, "image_id": a.image_id, "category_id": a.category_id,
                   "bbox": [x, y, w, h]}
            if a.score is not None:
                rec["score"] = a.score
        cats.add(rec["category_id"])
        ann_records.append(rec)
    doc = {
        "images": [{"id": k, "width": v["width"], "height": v["height"],
                    "file_name": v.get("file_name", "")}
                   for k, v in sorted(images.items())],
        "annotations": ann_records,
        "categories": [{"id": c, "name": f"category-{c}"} for c in sorted(cats)],
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=1, sort_keys=True)
        f.write("\n")
