"""COCO-protocol average precision with tiny-object size buckets.

Matching is greedy per (image, category): detections sorted by descending
score (ties by input order), capped at max_dets, each matched to the
unmatched ground truth with the highest IoU at or above the threshold
(ties prefer the earlier ground truth).  AP uses the 101-point interpolated
precision-recall summary.  Size buckets are evaluated at IoU 0.50 with the
COCO area-range ignore convention: out-of-bucket ground truth is ignored,
detections matched to ignored ground truth are dropped, and unmatched
detections outside the bucket's area range are dropped rather than counted
as false positives.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

from .density import BBoxAnnotation
from .errors import InvalidArgumentError

# gt-area buckets, pixels^2: very tiny < 8^2, tiny < 16^2, small < 32^2
SIZE_BUCKETS = (
    ("vt", 0.0, 64.0),
    ("t", 64.0, 256.0),
    ("s", 256.0, 1024.0),
    ("m", 1024.0, math.inf),
)

IOU_THRESHOLDS = tuple(0.5 + 0.05 * i for i in range(10))


@dataclass
class Detection:
    image_id: int
    category_id: int
    bbox: tuple  # (x, y, w, h), top-left origin
    score: float

    def __post_init__(self):
        x, y, w, h = (float(v) for v in self.bbox)
        if not (w > 0 and h > 0):
            raise InvalidArgumentError(
                f"detection (image {self.image_id}): non-positive box {w}x{h}")
        if not math.isfinite(self.score):
            raise InvalidArgumentError(
                f"detection (image {self.image_id}): non-finite score")
        self.bbox = (x, y, w, h)

    @property
    def area(self) -> float:
        return self.bbox[2] * self.bbox[3]


@dataclass
class APReport:
    ap: float
    ap50: float
    ap75: float
    ap_vt: float
    ap_t: float
    ap_s: float
    ap_m: float
    tp: int
    fp: int
    fn: int

    def to_dict(self) -> dict:
        return {
            "ap": self.ap, "ap50": self.ap50, "ap75": self.ap75,
            "ap_vt": self.ap_vt, "ap_t": self.ap_t,
            "ap_s": self.ap_s, "ap_m": self.ap_m,
            "tp": self.tp, "fp": self.fp, "fn": self.fn,
        }


def iou(a, b) -> float:
    """Intersection over union of two (x, y, w, h) boxes."""
    ax, ay, aw, ah = (float(v) for v in a)
    bx, by, bw, bh = (float(v) for v in b)
    if aw <= 0 or ah <= 0 or bw <= 0 or bh <= 0:
        raise InvalidArgumentError("iou: boxes must have positive extents")
    ix = min(ax + aw, bx + bw) - max(ax, bx)
    iy = min(ay + ah, by + bh) - max(ay, by)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (aw * ah + bw * bh - inter)


def _gt_bbox(ann: BBoxAnnotation) -> tuple:
    return ann.to_xywh()


def _match_group(det_boxes, gt_boxes, thresh, gt_ignore, det_keep_unmatched):
    """Greedy matcher for one already-sorted detection list.

    Returns (flags, gt_matched): flags[i] is True (TP), False (FP), or None
    (excluded from evaluation).
    """
    order = sorted(range(len(gt_boxes)), key=lambda i: gt_ignore[i])
    matched = [False] * len(gt_boxes)
    flags = []
    for db in det_boxes:
        m = -1
        best = -1.0
        for gi in order:
            if matched[gi]:
                continue
            # once a real match exists, ignored gts cannot displace it
            if m > -1 and not gt_ignore[m] and gt_ignore[gi]:
                break
            v = iou(db, gt_boxes[gi])
            if v < thresh or v <= best:
                continue
            best = v
            m = gi
        if m == -1:
            flags.append(False if det_keep_unmatched(db) else None)
        else:
            matched[m] = True
            flags.append(None if gt_ignore[m] else True)
    return flags, matched


def _grouped(dets: Sequence[Detection], gts: Sequence[BBoxAnnotation],
             max_dets: int, categories=None):
    """(image, category) -> (capped sorted det indices, gt indices)."""
    groups: dict = {}
    for gi, g in enumerate(gts):
        groups.setdefault((g.image_id, g.category_id), ([], []))[1].append(gi)
    for di, d in enumerate(dets):
        if categories is not None and d.category_id not in categories:
            continue
        groups.setdefault((d.image_id, d.category_id), ([], []))[0].append(di)
    for key, (det_idx, _) in groups.items():
        det_idx.sort(key=lambda i: -dets[i].score)  # stable: ties keep input order
        del det_idx[max_dets:]
    return groups


def match_detections(dets: Sequence[Detection], gts: Sequence[BBoxAnnotation],
                     iou_thresh: float, max_dets: int = 100):
    """Match every detection against its (image, category) ground truths.

    Returns (det_flags, gt_matched) aligned with the inputs; a detection
    flag is True for TP, False for FP, None when dropped by the max_dets
    cap.
    """
    if not (0.0 < iou_thresh <= 1.0):
        raise InvalidArgumentError(f"match_detections: bad iou threshold {iou_thresh}")
    if max_dets < 0:
        raise InvalidArgumentError(f"match_detections: bad max_dets {max_dets}")
    det_flags: list = [None] * len(dets)
    gt_matched = [False] * len(gts)
    groups = _grouped(dets, gts, max_dets)
    for key in sorted(groups):
        det_idx, gt_idx = groups[key]
        flags, matched = _match_group(
            [dets[i].bbox for i in det_idx],
            [_gt_bbox(gts[i]) for i in gt_idx],
            iou_thresh, [False] * len(gt_idx), lambda b: True)
        for i, fl in zip(det_idx, flags):
            det_flags[i] = fl
        for i, m in zip(gt_idx, matched):
            gt_matched[i] = m
    return det_flags, gt_matched


def average_precision(flags, total_gt: int) -> float:
    """101-point interpolated AP from score-ordered TP/FP flags."""
    if total_gt == 0:
        return -1.0
    kept = [bool(f) for f in flags if f is not None]
    if not kept:
        return 0.0
    precisions = []
    recalls = []
    tp = fp = 0
    for f in kept:
        if f:
            tp += 1
        else:
            fp += 1
        precisions.append(tp / (tp + fp))
        recalls.append(tp / total_gt)
    for i in range(len(precisions) - 2, -1, -1):
        if precisions[i] < precisions[i + 1]:
            precisions[i] = precisions[i + 1]
    ap = 0.0
    j = 0
    for i in range(101):
        r = i / 100.0
        while j < len(recalls) and recalls[j] < r:
            j += 1
        if j < len(recalls):
            ap += precisions[j]
    return ap / 101.0


def _ap_at(dets, gts, groups, categories, thresh, bucket=None):
    """Mean AP over categories at one IoU threshold, optionally restricted
    to a gt-area bucket.  Returns (mean_ap_or_sentinel, tp, fp, total_gt)."""
    per_cat = []
    tot_tp = tot_fp = tot_gt = 0
    for cat in categories:
        entries = []
        n_gt = 0
        for key in sorted(groups):
            if key[1] != cat:
                continue
            det_idx, gt_idx = groups[key]
            if bucket is None:
                gt_ignore = [False] * len(gt_idx)
                keep = lambda b: True
            else:
                lo, hi = bucket
                gt_ignore = [not (lo <= gts[i].width * gts[i].height < hi)
                             for i in gt_idx]
                keep = lambda b, lo=lo, hi=hi: lo <= b[2] * b[3] < hi
            n_gt += sum(1 for ig in gt_ignore if not ig)
            flags, _ = _match_group(
                [dets[i].bbox for i in det_idx],
                [_gt_bbox(gts[i]) for i in gt_idx],
                thresh, gt_ignore, keep)
            for i, fl in zip(det_idx, flags):
                if fl is not None:
                    entries.append((-dets[i].score, i, fl))
        if n_gt == 0:
            continue
        entries.sort(key=lambda e: (e[0], e[1]))
        flag_seq = [e[2] for e in entries]
        per_cat.append(average_precision(flag_seq, n_gt))
        tot_tp += sum(1 for f in flag_seq if f)
        tot_fp += sum(1 for f in flag_seq if not f)
        tot_gt += n_gt
    if not per_cat:
        return -1.0, tot_tp, tot_fp, tot_gt
    return sum(per_cat) / len(per_cat), tot_tp, tot_fp, tot_gt


def ap_report(dets: Sequence[Detection], gts: Sequence[BBoxAnnotation],
              max_dets: int = 100) -> APReport:
    """Full evaluation: AP averaged over IoU 0.50:0.05:0.95, AP50/AP75,
    the four size-bucket APs at IoU 0.50, and TP/FP/FN counts at IoU 0.50."""
    if max_dets < 0:
        raise InvalidArgumentError(f"ap_report: bad max_dets {max_dets}")
    if not gts:
        capped = _grouped(dets, [], max_dets)
        n_fp = sum(len(d) for d, _ in capped.values())
        return APReport(-1.0, -1.0, -1.0, -1.0, -1.0, -1.0, -1.0, 0, n_fp, 0)
    categories = sorted({g.category_id for g in gts})
    groups = _grouped(dets, gts, max_dets, categories=set(categories))

    by_thresh = {}
    for t in IOU_THRESHOLDS:
        by_thresh[t] = _ap_at(dets, gts, groups, categories, t)
    ap = sum(v[0] for v in by_thresh.values()) / len(IOU_THRESHOLDS)
    ap50, tp, fp, n_gt = by_thresh[IOU_THRESHOLDS[0]]
    ap75 = by_thresh[IOU_THRESHOLDS[5]][0]

    bucket_aps = {}
    for name, lo, hi in SIZE_BUCKETS:
        bucket_aps[name], _, _, _ = _ap_at(dets, gts, groups, categories, 0.5,
                                           bucket=(lo, hi))
    return APReport(ap, ap50, ap75,
                    bucket_aps["vt"], bucket_aps["t"], bucket_aps["s"],
                    bucket_aps["m"], tp, fp, n_gt - tp)
