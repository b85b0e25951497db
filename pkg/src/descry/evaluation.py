"""COCO-style detection evaluation.

Greedy score-descending matching with ignore-region semantics, 101-point
interpolated average precision, averaged over the IoU thresholds
0.50:0.05:0.95 and over categories that have ground truth. Matching
follows the reference conventions: at most 100 detections per image and
category, a detection takes the eligible non-ignore ground-truth box of
highest IoU at or above the threshold (equal IoU resolves to the later
box), falls back to the best ignore box, and is otherwise a false
positive. Detections matched to ignore boxes count as neither.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .coco import Annotation, BBox, Dataset, Detection, DetectionResultSet
from .errors import ZeroGroundTruthError

IOU_THRESHOLDS = tuple((50 + 5 * i) / 100 for i in range(10))
RECALL_POINTS = np.array([j / 100 for j in range(101)])
MAX_DETECTIONS_PER_IMAGE_CATEGORY = 100


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes, in [0, 1]."""
    ix = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    iy = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def _iou_against_ignore(det: BBox, gt: BBox) -> float:
    # ignore regions use intersection over the detection's own area
    ix = min(det.x + det.w, gt.x + gt.w) - max(det.x, gt.x)
    iy = min(det.y + det.h, gt.y + gt.h) - max(det.y, gt.y)
    if ix <= 0 or iy <= 0:
        return 0.0
    return (ix * iy) / det.area


@dataclass(frozen=True)
class MatchRecord:
    detection_index: int
    score: float
    matched_gt: int | None
    is_tp: bool
    is_ignored: bool


def match_category(
    gts: Sequence[Annotation],
    dets: Sequence[Detection],
    iou_thresh: float,
) -> list[MatchRecord]:
    """Match one image's detections of one category against its ground truth.

    Detections are processed in descending score (ties keep input order)
    and truncated to the per-image-per-category cap. Ignore boxes may
    absorb any number of detections.
    """
    order = sorted(range(len(dets)), key=lambda i: -dets[i].score)
    order = order[:MAX_DETECTIONS_PER_IMAGE_CATEGORY]
    # real boxes first, ignore boxes after; stable within each group
    gt_order = sorted(range(len(gts)), key=lambda i: gts[i].ignore)

    records: list[MatchRecord] = []
    taken: set[int] = set()
    for det_idx in order:
        det = dets[det_idx]
        best = -1
        best_iou = min(iou_thresh, 1.0 - 1e-10)
        for gi in gt_order:
            gt = gts[gi]
            if gi in taken and not gt.ignore:
                continue
            if best >= 0 and not gts[best].ignore and gt.ignore:
                break
            overlap = _iou_against_ignore(det.bbox, gt.bbox) if gt.ignore else iou(det.bbox, gt.bbox)
            if overlap < best_iou:
                continue
            best_iou = overlap
            best = gi
        if best < 0:
            records.append(MatchRecord(det_idx, det.score, None, False, False))
            continue
        taken.add(best)
        records.append(
            MatchRecord(det_idx, det.score, gts[best].id, not gts[best].ignore, gts[best].ignore)
        )
    return records


def average_precision(labels: Sequence[bool], n_gt: int) -> float:
    """101-point interpolated AP from score-ranked true/false-positive flags."""
    if n_gt < 1:
        raise ZeroGroundTruthError("average precision needs at least one ground-truth box")
    if not labels:
        return 0.0
    flags = np.asarray(labels, dtype=bool)
    tp = np.cumsum(flags)
    fp = np.cumsum(~flags)
    recall = tp / n_gt
    precision = tp / (tp + fp)
    # make the precision envelope non-increasing from the right
    precision = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, RECALL_POINTS, side="left")
    valid = idx < len(precision)
    interpolated = np.zeros(len(RECALL_POINTS))
    interpolated[valid] = precision[idx[valid]]
    return float(interpolated.mean())


@dataclass(frozen=True)
class APResult:
    """Per-category AP (None where a category has no ground truth) and the
    mean over defined categories and all IoU thresholds."""

    per_class_ap: dict[int, float | None]
    ap_5095: float


def _category_ap(
    gt_by_image: dict[int, list[Annotation]],
    det_by_image: dict[int, list[Detection]],
    image_order: Sequence[int],
    n_gt: int,
    thresh: float,
) -> float:
    pooled: list[MatchRecord] = []
    for img_id in image_order:
        gts = gt_by_image.get(img_id, [])
        dets = det_by_image.get(img_id, [])
        if dets:
            pooled.extend(match_category(gts, dets, thresh))
    pooled.sort(key=lambda r: -r.score)
    labels = [r.is_tp for r in pooled if not r.is_ignored]
    return average_precision(labels, n_gt)


def evaluate_dataset(
    dataset: Dataset,
    results: DetectionResultSet,
    jobs: int = 1,
) -> APResult:
    """AP over IoU 0.50:0.05:0.95 per category, then averaged.

    Categories without any non-ignored ground truth are undefined and
    excluded from the mean. Work is split per (category, threshold); the
    reduction order is fixed, so parallel runs reproduce sequential ones.
    """
    gt: dict[int, dict[int, list[Annotation]]] = {c.id: {} for c in dataset.categories}
    n_real_gt: dict[int, int] = {c.id: 0 for c in dataset.categories}
    for ann in dataset.annotations:
        gt[ann.category_id].setdefault(ann.image_id, []).append(ann)
        if not ann.ignore:
            n_real_gt[ann.category_id] += 1
    det: dict[int, dict[int, list[Detection]]] = {c.id: {} for c in dataset.categories}
    for d in results.detections:
        det[d.category_id].setdefault(d.image_id, []).append(d)

    image_order = [img.id for img in dataset.images]
    defined = [cid for cid in sorted(gt) if n_real_gt[cid] > 0]
    if not defined:
        raise ZeroGroundTruthError(f"{dataset.dataset_id}: no ground-truth boxes to evaluate")

    tasks = [(cid, thresh) for cid in defined for thresh in IOU_THRESHOLDS]

    def run(task: tuple[int, float]) -> float:
        cid, thresh = task
        return _category_ap(gt[cid], det[cid], image_order, n_real_gt[cid], thresh)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            aps = list(pool.map(run, tasks))
    else:
        aps = [run(t) for t in tasks]

    per_class: dict[int, float | None] = {c.id: None for c in dataset.categories}
    offset = 0
    for cid in defined:
        per_class[cid] = float(np.mean(aps[offset : offset + len(IOU_THRESHOLDS)]))
        offset += len(IOU_THRESHOLDS)
    ap_5095 = float(np.mean([per_class[cid] for cid in defined]))
    return APResult(per_class_ap=per_class, ap_5095=ap_5095)
