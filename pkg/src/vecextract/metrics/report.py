"""Scene-level evaluation producing a :class:`MetricReport`."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from ..geometry import BUILDING, CENTER_LINE, CLASS_NAMES, ROAD_BOUNDARY, StructureKind
from .ap import coco_map, sap_sf
from .graph import apls
from .polygon import ciou, polis, polygon_iou
from .raster import pixel_counts, prf_from_counts

DEFINITIONS = """\
PoLiS(A, B)   = 1/(2|A|) * sum_{a in A} d(a, boundary B) + 1/(2|B|) * sum_{b in B} d(b, boundary A)
                (vertex-to-boundary Euclidean distance, normalized units)
IoU(A, B)     = area(A & B) / area(A | B)
C-IoU(A, B)   = IoU(A, B) * (1 - |n_A - n_B| / (n_A + n_B)), n = vertex count
iou / ciou    = per image, predictions and GT polygons are paired by maximum IoU;
                the mean runs over max(#pred, #gt) slots, unpaired slots score 0
polis         = mean PoLiS over pairs with IoU >= 0.5
mAP           = COCO protocol: IoU thresholds 0.50:0.05:0.95, greedy score-ordered
                matching, 101-point interpolated precision, mean over thresholds and classes
precision/recall/f1 = rasterized lines (stroke 1); a pixel matches when the other
                raster has a pixel within the tolerance (default 10 px); empty side -> 1
APLS          = harmonic mean over both directions of 1 - mean(min(1, |L - L'| / L)) over
                sampled node pairs; nodes snap onto the other graph's nearest edge within
                10 px; unsnappable or unreachable pairs take penalty 1
sAP_t / sF_t  = segments ranked by score; TP when min over endpoint orderings of the
                summed squared endpoint distance (px) is below t^2 against an unmatched GT;
                101-point interpolated AP / best F along the PR curve
ECM           = not computed (null)
"""


@dataclass
class MetricReport:
    map: float | None = None
    iou: float | None = None
    ciou: float | None = None
    polis: float | None = None
    precision: float | None = None
    recall: float | None = None
    f1: float | None = None
    apls: float | None = None
    sap10: float | None = None
    sap15: float | None = None
    sf10: float | None = None
    sf15: float | None = None
    ecm: float | None = None
    per_class: dict = field(default_factory=dict)
    counts: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return _clean(asdict(self))

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["scope", "metric", "value"])
        d = self.to_dict()
        for k in ("map", "iou", "ciou", "polis", "precision", "recall", "f1", "apls",
                  "sap10", "sap15", "sf10", "sf15", "ecm"):
            w.writerow(["aggregate", k, d[k]])
        for scope, vals in d["per_class"].items():
            for k, v in vals.items():
                w.writerow([scope, k, v])
        return buf.getvalue()


def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (float, np.floating)):
        return None if math.isnan(x) else float(x)
    if isinstance(x, np.integer):
        return int(x)
    return x


def _mean(vals):
    return float(np.mean(vals)) if len(vals) else float("nan")


def polygon_pairing(pred_polys, gt_polys):
    """Pair polygons by maximum total IoU; returns (pairs, iou matrix)."""
    if not pred_polys or not gt_polys:
        return [], np.zeros((len(pred_polys), len(gt_polys)))
    ious = np.array([[polygon_iou(p.xy, g.xy, repair=True) for g in gt_polys] for p in pred_polys])
    rows, cols = linear_sum_assignment(-ious)
    return list(zip(rows.tolist(), cols.tolist())), ious


def _building_scores(pred, gt):
    P = [v for v in pred.instances if v.class_id == BUILDING and v.kind is StructureKind.POLYGON]
    G = [v for v in gt.instances if v.class_id == BUILDING and v.kind is StructureKind.POLYGON]
    slots = max(len(P), len(G))
    if slots == 0:
        return None
    pairs, ious = polygon_pairing(P, G)
    iou_sum = ciou_sum = 0.0
    pol = []
    for r, c in pairs:
        if ious[r, c] <= 0:
            continue
        iou_sum += ious[r, c]
        ciou_sum += ciou(P[r].xy, G[c].xy, repair=True)
        if ious[r, c] >= 0.5:
            pol.append(polis(P[r].xy, G[c].xy))
    return iou_sum / slots, ciou_sum / slots, pol


def evaluate(pred_scenes, gt_scenes, tol_px: float = 10, apls_samples: int = 200, seed: int = 0,
             snap_px: float = 10.0, stroke_px: int = 1, sap_thresholds=(10, 15)) -> MetricReport:
    """Evaluate predicted scenes against ground truth (paired by image id)."""
    preds = {s.image_id: s for s in pred_scenes}
    rep = MetricReport()
    rep.notes.append("ECM is not computed; its definition is outside this package.")
    ious, cious, poliss = [], [], []
    line_counts = {c: np.zeros(4, dtype=np.int64) for c in (ROAD_BOUNDARY, CENTER_LINE, "all")}
    apls_vals = {ROAD_BOUNDARY: [], CENTER_LINE: [], "all": []}
    from ..geometry import Scene

    for gt in gt_scenes:
        pred = preds.get(gt.image_id, Scene(gt.image_id, gt.raster_size, ()))
        b = _building_scores(pred, gt)
        if b is not None:
            ious.append(b[0])
            cious.append(b[1])
            poliss.extend(b[2])
        for key, classes in ((ROAD_BOUNDARY, (ROAD_BOUNDARY,)), (CENTER_LINE, (CENTER_LINE,)),
                             ("all", (ROAD_BOUNDARY, CENTER_LINE))):
            line_counts[key] += pixel_counts(pred, gt, tol_px, gt.raster_size, classes, stroke_px)
            apls_vals[key].append(apls(pred.instances, gt.instances, gt.raster_size, apls_samples,
                                       seed, snap_px, classes))
    mAP, per_class_map = coco_map(pred_scenes, gt_scenes, per_class=True)
    seg = sap_sf(pred_scenes, gt_scenes, sap_thresholds, class_id=CENTER_LINE)

    rep.map, rep.iou, rep.ciou = mAP, _mean(ious), _mean(cious)
    rep.polis = _mean(poliss)
    rep.precision, rep.recall, rep.f1 = prf_from_counts(*line_counts["all"])
    rep.apls = _mean(apls_vals["all"])
    for k, v in seg.items():
        setattr(rep, k, v)
    rep.per_class[CLASS_NAMES[BUILDING]] = {
        "map": per_class_map.get(BUILDING, float("nan")), "iou": rep.iou, "ciou": rep.ciou, "polis": rep.polis,
    }
    for c in (ROAD_BOUNDARY, CENTER_LINE):
        p, r, f = prf_from_counts(*line_counts[c])
        rep.per_class[CLASS_NAMES[c]] = {"precision": p, "recall": r, "f1": f, "apls": _mean(apls_vals[c])}
    rep.per_class[CLASS_NAMES[CENTER_LINE]].update(seg)
    n_gt = {CLASS_NAMES[c]: sum(v.class_id == c for s in gt_scenes for v in s.instances) for c in CLASS_NAMES}
    n_pred = {CLASS_NAMES[c]: sum(v.class_id == c for s in pred_scenes for v in s.instances) for c in CLASS_NAMES}
    rep.counts = {"images": len(gt_scenes), "gt": n_gt, "pred": n_pred, "polis_pairs": len(poliss)}
    return rep


def describe() -> str:
    return DEFINITIONS
