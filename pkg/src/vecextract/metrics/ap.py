"""Average-precision metrics: COCO-style polygon mAP and structural sAP/sF for segments."""
from __future__ import annotations

import numpy as np

from ..geometry import StructureKind
from .polygon import polygon_iou

IOU_THRESHOLDS = np.linspace(0.5, 0.95, int(np.round((0.95 - 0.5) / 0.05)) + 1)
RECALL_THRESHOLDS = np.linspace(0.0, 1.0, int(np.round(1.0 / 0.01)) + 1)


def interpolated_ap(tp: np.ndarray, n_gt: int, rec_thrs=RECALL_THRESHOLDS) -> float:
    """101-point interpolated AP from score-ordered TP flags."""
    tp = np.asarray(tp, dtype=float)
    if n_gt == 0:
        return float("nan")
    if tp.size == 0:
        return 0.0
    tps = np.cumsum(tp)
    fps = np.cumsum(1.0 - tp)
    rc = tps / n_gt
    pr = tps / (tps + fps)
    pr = np.maximum.accumulate(pr[::-1])[::-1]
    inds = np.searchsorted(rc, rec_thrs, side="left")
    q = np.where(inds < len(pr), pr[np.minimum(inds, len(pr) - 1)], 0.0)
    return float(np.mean(q))


def _by_image(scenes):
    return {s.image_id: s for s in scenes}


def _polygons(scene, class_id):
    if scene is None:
        return []
    return [v for v in scene.instances if v.class_id == class_id and v.kind is StructureKind.POLYGON]


def _greedy(dts, gts, ious, thr):
    """COCO greedy assignment: each detection takes the best still-free GT at IoU >= thr."""
    taken = np.zeros(len(gts), dtype=bool)
    flags = np.zeros(len(dts))
    for d in range(len(dts)):
        best, best_iou = -1, min(thr, 1 - 1e-10)
        for g in range(len(gts)):
            if taken[g] or ious[d, g] < best_iou:
                continue
            best, best_iou = g, ious[d, g]
        if best >= 0:
            taken[best] = True
            flags[d] = 1.0
    return flags


def coco_map(pred_scenes, gt_scenes, iou_thresholds=IOU_THRESHOLDS, max_dets: int = 100,
             classes=None, per_class: bool = False):
    """COCO polygon mAP averaged over IoU thresholds and classes.

    Only polygon instances take part. Classes without ground truth are
    skipped; with no ground truth at all the result is NaN.
    """
    preds, gts = _by_image(pred_scenes), _by_image(gt_scenes)
    image_ids = sorted(set(preds) | set(gts))
    if classes is None:
        classes = sorted({v.class_id for s in gt_scenes for v in s.instances
                          if v.kind is StructureKind.POLYGON})
    table = {}
    for c in classes:
        scores, flags, n_gt = [], {t: [] for t in range(len(iou_thresholds))}, 0
        for iid in image_ids:
            g = _polygons(gts.get(iid), c)
            d = _polygons(preds.get(iid), c)
            order = np.argsort([-v.score for v in d], kind="mergesort")[:max_dets]
            d = [d[k] for k in order]
            n_gt += len(g)
            ious = np.array([[polygon_iou(a.xy, b.xy, repair=True) for b in g] for a in d]).reshape(len(d), len(g))
            scores.extend(v.score for v in d)
            for t, thr in enumerate(iou_thresholds):
                flags[t].append(_greedy(d, g, ious, thr))
        if n_gt == 0:
            continue
        order = np.argsort(-np.asarray(scores, dtype=float), kind="mergesort")
        table[c] = [interpolated_ap(np.concatenate(flags[t] or [np.zeros(0)])[order], n_gt)
                    for t in range(len(iou_thresholds))]
    if not table:
        value = float("nan")
    else:
        value = float(np.mean([np.mean(v) for v in table.values()]))
    if per_class:
        return value, {c: float(np.mean(v)) for c, v in table.items()}
    return value


def segment_distance_sq(p, g) -> float:
    """Smaller of the two endpoint pairings of summed squared endpoint distances."""
    p = np.asarray(p, dtype=float)
    g = np.asarray(g, dtype=float)
    same = np.sum((p - g) ** 2)
    swap = np.sum((p - g[::-1]) ** 2)
    return float(min(same, swap))


def _segments(scene, class_id):
    if scene is None:
        return []
    return [v for v in scene.instances if v.kind is StructureKind.SEGMENT
            and (class_id is None or v.class_id == class_id)]


def sap_sf(pred_scenes, gt_scenes, thresholds=(10, 15), raster_size: int | None = None, class_id=None):
    """Structural AP and best F-score for line segments, in pixel units.

    A prediction (in descending score order) is a true positive when the
    nearest unmatched GT segment has summed squared endpoint distance
    below ``threshold**2``. Returns ``{"sap10": ..., "sf10": ..., ...}``.
    """
    preds, gts = _by_image(pred_scenes), _by_image(gt_scenes)
    image_ids = sorted(set(preds) | set(gts))
    out = {}
    for thr in thresholds:
        scores, flags, n_gt = [], [], 0
        for iid in image_ids:
            gs, ps = gts.get(iid), preds.get(iid)
            S = raster_size or (gs or ps).raster_size
            g = [v.xy * S for v in _segments(gs, class_id)]
            d = _segments(ps, class_id)
            d = [d[k] for k in np.argsort([-v.score for v in d], kind="mergesort")]
            n_gt += len(g)
            taken = np.zeros(len(g), dtype=bool)
            for v in d:
                dist = [segment_distance_sq(v.xy * S, gg) if not taken[k] else np.inf for k, gg in enumerate(g)]
                k = int(np.argmin(dist)) if dist else -1
                hit = k >= 0 and dist[k] < thr ** 2
                if hit:
                    taken[k] = True
                flags.append(1.0 if hit else 0.0)
                scores.append(v.score)
        order = np.argsort(-np.asarray(scores, dtype=float), kind="mergesort")
        tp = np.asarray(flags)[order] if flags else np.zeros(0)
        out[f"sap{thr}"] = interpolated_ap(tp, n_gt) if n_gt else (float("nan") if not len(tp) else 0.0)
        if n_gt and tp.size:
            tps = np.cumsum(tp)
            rc = tps / n_gt
            pr = tps / np.arange(1, len(tp) + 1)
            f = np.where(rc + pr > 0, 2 * rc * pr / np.maximum(rc + pr, 1e-300), 0.0)
            out[f"sf{thr}"] = float(f.max())
        else:
            out[f"sf{thr}"] = out[f"sap{thr}"] if not n_gt else 0.0
    return out
