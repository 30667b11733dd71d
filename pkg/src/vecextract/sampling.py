"""Uniform arc-length resampling of vectors into fixed-length point sequences.

Closed shapes start at their top-left vertex and run clockwise (positive
shoelace area in the y-down frame); open shapes keep their given direction
and include both endpoints. Every original key point is snapped onto one
sample so the ``T`` key points always exist inside the ``M``-sequence.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .align import monotone_assign
from .geometry import StructureKind, VectorInstance, edge_lengths, signed_area


@dataclass(frozen=True)
class SampledSequence:
    """A length-``M`` resampling of one vector.

    ``arc_params`` holds the uniform arc-length position of every slot;
    unflagged points lie on the path at exactly that position while flagged
    slots carry the original key point that replaced the nearest sample.
    """

    points: np.ndarray
    key_flags: np.ndarray
    arc_params: np.ndarray
    source_id: int
    orientation: str
    kind: StructureKind

    @property
    def key_index(self) -> np.ndarray:
        return np.flatnonzero(self.key_flags)

    @property
    def key_points(self) -> np.ndarray:
        return self.points[self.key_flags]

    def reversed(self) -> "SampledSequence":
        return SampledSequence(
            points=_frozen(self.points[::-1]),
            key_flags=_frozen(self.key_flags[::-1]),
            arc_params=_frozen(self.arc_params[-1] - self.arc_params[::-1]),
            source_id=self.source_id,
            orientation="reversed" if self.orientation == "canonical" else "canonical",
            kind=self.kind,
        )


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


def arc_length(v: VectorInstance) -> float:
    return float(edge_lengths(v.xy, closed=v.kind.closed).sum())


def top_left_start(points) -> int:
    """Index of the vertex with the smallest y, ties broken by smallest x."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    return int(np.lexsort((pts[:, 0], pts[:, 1]))[0])


def canonical_points(v: VectorInstance) -> np.ndarray:
    """Key points in canonical traversal order (rotated and oriented for polygons)."""
    pts = np.array(v.xy)
    if not v.kind.closed:
        return pts
    start = top_left_start(pts)
    pts = np.roll(pts, -start, axis=0)
    if signed_area(pts) < 0:
        pts = np.vstack([pts[:1], pts[:0:-1]])
    return pts


def _walk(pts: np.ndarray, closed: bool, t: np.ndarray) -> np.ndarray:
    seg = edge_lengths(pts, closed)
    ends = np.roll(pts, -1, axis=0) if closed else pts[1:]
    starts = pts if closed else pts[:-1]
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    idx = np.clip(np.searchsorted(cum, t, side="right") - 1, 0, len(seg) - 1)
    frac = (t - cum[idx]) / seg[idx]
    return starts[idx] + frac[:, None] * (ends[idx] - starts[idx])


def resample_uniform(v: VectorInstance, M: int) -> SampledSequence:
    pts = canonical_points(v)
    T = len(pts)
    if M < T:
        raise ValueError(f"insufficient resolution: M={M} < {T} key points")
    closed = v.kind.closed
    seg = edge_lengths(pts, closed)
    total = float(seg.sum())
    if closed:
        t = np.arange(M) * (total / M)
    else:
        t = np.arange(M) * (total / (M - 1))
        t[-1] = total
    samples = _walk(pts, closed, t)
    key_arc = np.concatenate([[0.0], np.cumsum(seg)])[:T]
    assignment = monotone_assign(np.abs(key_arc[:, None] - t[None, :]))
    samples[assignment] = pts
    flags = np.zeros(M, dtype=bool)
    flags[assignment] = True
    return SampledSequence(
        points=_frozen(samples),
        key_flags=_frozen(flags),
        arc_params=_frozen(t),
        source_id=v.id,
        orientation="canonical",
        kind=v.kind,
    )


def orientation_candidates(v: VectorInstance, M: int) -> list[SampledSequence]:
    forward = resample_uniform(v, M)
    if v.kind.closed:
        return [forward]
    return [forward, forward.reversed()]
