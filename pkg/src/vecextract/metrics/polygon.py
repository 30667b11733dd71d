"""Polygon-pair metrics: PoLiS, IoU and complexity-aware IoU."""
from __future__ import annotations

import numpy as np
from shapely import make_valid
from shapely.geometry import MultiPolygon, Polygon

from ..geometry import point_segment_distance, signed_area


def _as_points(P):
    P = np.asarray(getattr(P, "xy", P), dtype=float).reshape(-1, 2)
    if len(P) < 3 or abs(signed_area(P)) <= 1e-15:
        raise ValueError("degenerate polygon")
    return P


def boundary_distance(points, poly) -> np.ndarray:
    """Distance from each point to the closest edge of the closed ring ``poly``."""
    a = poly
    b = np.roll(poly, -1, axis=0)
    d = point_segment_distance(np.asarray(points)[:, None, :], a[None], b[None])
    return d.min(axis=1)


def polis(A, B) -> float:
    """Mean vertex-to-boundary distance, averaged over both directions."""
    A, B = _as_points(A), _as_points(B)
    return float(boundary_distance(A, B).mean() / 2.0 + boundary_distance(B, A).mean() / 2.0)


def _polygonal(geom):
    parts = getattr(geom, "geoms", [geom])
    polys = [g for g in parts if isinstance(g, (Polygon, MultiPolygon))]
    out = MultiPolygon()
    for g in polys:
        out = out.union(g)
    return out


def _shapely(P, repair=False):
    poly = Polygon(_as_points(P))
    if not poly.is_valid:
        if not repair:
            raise ValueError("self-intersecting polygon")
        # keep the area-bearing part of the repaired geometry
        poly = _polygonal(make_valid(poly))
    return poly


def polygon_iou(A, B, repair: bool = False) -> float:
    """Intersection over union of two simple polygons.

    With ``repair`` a self-intersecting input is first made valid (its
    polygonal part is kept) instead of raising; evaluators use this for
    predictions.
    """
    pa, pb = _shapely(A, repair), _shapely(B, repair)
    union = pa.union(pb).area
    if union <= 0.0:
        return 0.0
    return float(pa.intersection(pb).area / union)


def ciou(A, B, repair: bool = False) -> float:
    """IoU scaled by ``1 - |n_A - n_B| / (n_A + n_B)`` over vertex counts."""
    na = len(_as_points(A))
    nb = len(_as_points(B))
    return polygon_iou(A, B, repair) * (1.0 - abs(na - nb) / (na + nb))
