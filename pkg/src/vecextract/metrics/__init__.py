from .ap import IOU_THRESHOLDS, coco_map, interpolated_ap, sap_sf, segment_distance_sq
from .graph import apls, build_graph
from .polygon import ciou, polis, polygon_iou
from .raster import pixel_prf
from .report import MetricReport, describe, evaluate

__all__ = [
    "IOU_THRESHOLDS", "MetricReport", "apls", "build_graph", "ciou", "coco_map", "describe",
    "evaluate", "interpolated_ap", "pixel_prf", "polis", "polygon_iou", "sap_sf", "segment_distance_sq",
]
