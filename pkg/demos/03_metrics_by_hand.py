"""Each evaluation metric on a tiny hand-built case.

Run::

    python3 demos/03_metrics_by_hand.py
"""
from vecextract.geometry import CENTER_LINE, ROAD_BOUNDARY, Scene, StructureKind, VectorInstance
from vecextract.metrics import apls, ciou, coco_map, describe, pixel_prf, polis, polygon_iou, sap_sf

sq = [(0.2, 0.2), (0.6, 0.2), (0.6, 0.6), (0.2, 0.6)]
moved = [(x + 0.05, y) for x, y in sq]
dense = [(0.2, 0.2), (0.4, 0.2), (0.6, 0.2), (0.6, 0.6), (0.2, 0.6)]

print(f"square shifted by 0.05: IoU {polygon_iou(sq, moved):.4f}, PoLiS {polis(sq, moved):.4f}")
print(f"same square with an extra vertex: IoU {polygon_iou(sq, dense):.3f}, C-IoU {ciou(sq, dense):.3f}")

gt = Scene(0, 256, [VectorInstance(StructureKind.POLYGON, 0, sq)])
pred = Scene(0, 256, [VectorInstance(StructureKind.POLYGON, 0, moved, score=0.9)])
print(f"mAP of the shifted square: {coco_map([pred], [gt]):.3f}")

road = VectorInstance(StructureKind.POLYLINE, ROAD_BOUNDARY, [(0.1, 0.5), (0.5, 0.5), (0.9, 0.5)])
near = VectorInstance(StructureKind.POLYLINE, ROAD_BOUNDARY, [(0.1, 0.52), (0.9, 0.52)])
p, r, f = pixel_prf(Scene(0, 256, [near]), Scene(0, 256, [road]))
print(f"road 5 px off: precision {p:.2f}, recall {r:.2f}, F1 {f:.2f}")
print(f"APLS of the same pair: {apls([near], [road], 256):.3f}")

seg = VectorInstance(StructureKind.SEGMENT, CENTER_LINE, [(0.1, 0.1), (0.3, 0.1)])
seg_pred = VectorInstance(StructureKind.SEGMENT, CENTER_LINE, [(0.3, 0.11), (0.1, 0.11)], score=0.8)
print("segment 2.6 px off, endpoints swapped:",
      sap_sf([Scene(0, 256, [seg_pred])], [Scene(0, 256, [seg])]))

print("\n" + describe())
