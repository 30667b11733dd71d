"""Core vector types, validation and elementary geometry.

Coordinates are normalized to ``[0, 1]^2`` with x to the right and y
downward (image convention). Under that convention a positive shoelace
value means the ring is traversed clockwise on screen.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

DISTINCT_TOL = 1e-9
AREA_TOL = 1e-12

BUILDING, ROAD_BOUNDARY, CENTER_LINE = 0, 1, 2
CLASS_NAMES = {BUILDING: "building", ROAD_BOUNDARY: "road_boundary", CENTER_LINE: "center_line"}


class StructureKind(str, enum.Enum):
    POLYGON = "polygon"
    POLYLINE = "polyline"
    SEGMENT = "segment"

    @property
    def closed(self) -> bool:
        return self is StructureKind.POLYGON

    @property
    def min_points(self) -> int:
        return {"polygon": 3, "polyline": 2, "segment": 2}[self.value]

    @property
    def max_points(self) -> int | None:
        return 2 if self is StructureKind.SEGMENT else None


CLASS_TABLE: Mapping[int, StructureKind] = {
    BUILDING: StructureKind.POLYGON,
    ROAD_BOUNDARY: StructureKind.POLYLINE,
    CENTER_LINE: StructureKind.SEGMENT,
}


@dataclass(frozen=True)
class VectorInstance:
    """One vector object: a structure kind, a class and an ordered point list.

    ``points`` is stored as a tuple of ``(x, y)`` float pairs so instances are
    hashable and compare exactly; use :attr:`xy` for an array view.
    ``score`` is only meaningful for predictions (ground truth keeps 1.0).
    """

    kind: StructureKind
    class_id: int
    points: tuple[tuple[float, float], ...]
    id: int = 0
    score: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", StructureKind(self.kind))
        pts = tuple((float(x), float(y)) for x, y in self.points)
        object.__setattr__(self, "points", pts)

    @property
    def xy(self) -> np.ndarray:
        arr = np.array(self.points, dtype=float).reshape(-1, 2)
        arr.flags.writeable = False
        return arr

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True)
class Scene:
    image_id: int
    raster_size: int
    instances: tuple[VectorInstance, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "instances", tuple(self.instances))


@dataclass(frozen=True)
class PredictedVector:
    """A predicted instance plus the dense decoder outputs it was extracted from.

    ``dense_points`` (M, 2) and ``keypoint_prob`` (M,) are the raw point
    sequence and key-point probabilities; ``class_probs`` includes the
    background class last. All three are optional for hand-made predictions.
    """

    instance: VectorInstance
    dense_points: np.ndarray | None = None
    keypoint_prob: np.ndarray | None = None
    class_probs: np.ndarray | None = None
    layer: int | None = None

    @property
    def score(self) -> float:
        return self.instance.score


@dataclass(frozen=True)
class BBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min <= self.x_max and self.y_min <= self.y_max):
            raise ValueError(f"inverted box {self}")
        for v in (self.x_min, self.y_min, self.x_max, self.y_max):
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"box coordinate {v} outside [0, 1]")

    def as_tuple(self):
        return (self.x_min, self.y_min, self.x_max, self.y_max)


@dataclass(frozen=True)
class Config:
    """Model and pipeline dimensions.

    ``n_samples`` is the total number of sampling points per query, spread
    round-robin over the pyramid levels. ``heads`` must divide ``channels``.
    """

    n_queries: int = 50
    n_points: int = 40
    channels: int = 64
    n_samples: int = 16
    n_layers: int = 6
    n_candidates: int = 900
    scales: tuple[int, ...] = (8, 16, 32, 64)
    keypoint_threshold: float = 0.5
    score_threshold: float = 0.3
    heads: int = 8
    ffn_mult: int = 4
    num_classes: int = 3
    class_table: Mapping[int, StructureKind] = field(default_factory=lambda: dict(CLASS_TABLE))

    def __post_init__(self):
        object.__setattr__(self, "scales", tuple(int(s) for s in self.scales))
        problems = []
        if self.n_queries < 1:
            problems.append("n_queries must be >= 1")
        if self.n_points < 2:
            problems.append("n_points must be >= 2")
        if self.channels < 4 or self.channels % 2:
            problems.append("channels must be even and >= 4")
        if self.n_samples < 1:
            problems.append("n_samples must be >= 1")
        if self.n_layers < 1:
            problems.append("n_layers must be >= 1")
        if self.n_candidates < self.n_queries:
            problems.append("n_candidates must be >= n_queries")
        if not self.scales or min(self.scales) < 1:
            problems.append("scales must be positive")
        if self.heads < 1 or self.channels % self.heads:
            problems.append("heads must divide channels")
        if not 0.0 <= self.keypoint_threshold <= 1.0:
            problems.append("keypoint_threshold must lie in [0, 1]")
        if problems:
            raise ValueError("; ".join(problems))

    def replace(self, **changes) -> "Config":
        from dataclasses import replace

        return replace(self, **changes)


def validate_instance(v: VectorInstance, cfg: Config | None = None) -> list[str]:
    """Return the list of violated invariants; an empty list means valid."""
    table = cfg.class_table if cfg is not None else CLASS_TABLE
    violations = []
    pts = np.asarray(v.points, dtype=float).reshape(-1, 2)
    n = len(pts)
    kind = v.kind
    if n < kind.min_points or (kind.max_points is not None and n > kind.max_points):
        violations.append(f"point count {n} invalid for {kind.value}")
    if not np.all(np.isfinite(pts)):
        violations.append("non-finite coordinate")
    elif np.any((pts < 0.0) | (pts > 1.0)):
        violations.append("coordinate out of range [0, 1]")
    if v.class_id not in table:
        violations.append(f"unknown class {v.class_id}")
    elif table[v.class_id] is not kind:
        violations.append(f"class {v.class_id} requires {table[v.class_id].value}, got {kind.value}")
    if n >= 2 and np.all(np.isfinite(pts)):
        edges = np.diff(pts, axis=0)
        if kind.closed:
            edges = np.vstack([edges, pts[:1] - pts[-1:]])
        if np.any(np.hypot(edges[:, 0], edges[:, 1]) <= DISTINCT_TOL):
            violations.append("repeated consecutive point")
        if kind.closed and n >= 3 and abs(signed_area(pts)) <= AREA_TOL:
            violations.append("degenerate polygon area")
    return violations


def is_valid(v: VectorInstance, cfg: Config | None = None) -> bool:
    return not validate_instance(v, cfg)


def signed_area(points) -> float:
    """Shoelace area with wraparound; positive for screen-clockwise rings (y down)."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) < 3:
        raise ValueError("signed_area needs at least 3 points")
    x, y = pts[:, 0], pts[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    return 0.5 * float(np.sum(x * yn - xn * y))


def bbox_of(v: VectorInstance | Sequence) -> BBox:
    pts = v.xy if isinstance(v, VectorInstance) else np.asarray(v, dtype=float).reshape(-1, 2)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    return BBox(float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1]))


def edge_lengths(points, closed: bool) -> np.ndarray:
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if closed:
        d = np.roll(pts, -1, axis=0) - pts
    else:
        d = np.diff(pts, axis=0)
    return np.hypot(d[:, 0], d[:, 1])


def point_segment_distance(p, a, b) -> np.ndarray:
    """Euclidean distance from points ``p`` (..., 2) to segments ``a``-``b`` (broadcast)."""
    p, a, b = (np.asarray(t, dtype=float) for t in (p, a, b))
    ab = b - a
    denom = np.sum(ab * ab, axis=-1)
    t = np.where(denom > 0, np.sum((p - a) * ab, axis=-1) / np.where(denom > 0, denom, 1.0), 0.0)
    t = np.clip(t, 0.0, 1.0)
    proj = a + t[..., None] * ab
    return np.hypot(*np.moveaxis(p - proj, -1, 0))


def close_ring(points) -> list[tuple[float, float]]:
    pts = [tuple(map(float, p)) for p in points]
    if pts and pts[0] != pts[-1]:
        pts.append(pts[0])
    return pts
