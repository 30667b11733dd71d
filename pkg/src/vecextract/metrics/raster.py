"""Pixel-level precision/recall/F1 with a distance tolerance."""
from __future__ import annotations

import numpy as np
from scipy import ndimage

from ..scene_io import rasterize

LINE_CLASSES = (1, 2)


def _within(mask_from, mask_to, tol):
    """Number of pixels of ``mask_from`` within ``tol`` of some pixel of ``mask_to``."""
    if not mask_from.any():
        return 0
    if not mask_to.any():
        return 0
    dist = ndimage.distance_transform_edt(~mask_to)
    return int(np.count_nonzero(mask_from & (dist <= tol)))


def pixel_counts(pred_scene, gt_scene, tol_px: float = 10, raster_size: int | None = None,
                 classes=LINE_CLASSES, stroke_px: int = 1):
    """(matched_pred, n_pred, matched_gt, n_gt) pixel counts for one scene pair."""
    S = raster_size or gt_scene.raster_size
    P = rasterize(pred_scene, stroke_px, classes=classes, size=S) > 0.5
    G = rasterize(gt_scene, stroke_px, classes=classes, size=S) > 0.5
    return _within(P, G, tol_px), int(P.sum()), _within(G, P, tol_px), int(G.sum())


def prf_from_counts(tp_pred, n_pred, tp_gt, n_gt):
    precision = tp_pred / n_pred if n_pred else 1.0
    recall = tp_gt / n_gt if n_gt else 1.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return float(precision), float(recall), float(f1)


def pixel_prf(pred_scene, gt_scene, tol_px: float = 10, raster_size: int | None = None,
              classes=LINE_CLASSES, stroke_px: int = 1):
    """Precision, recall and F1 of rasterized line classes.

    A predicted pixel counts when a GT pixel lies within ``tol_px``
    (Euclidean), and symmetrically for recall. An empty side has rate 1 by
    convention, so two empty rasters give (1, 1, 1).
    """
    return prf_from_counts(*pixel_counts(pred_scene, gt_scene, tol_px, raster_size, classes, stroke_px))
