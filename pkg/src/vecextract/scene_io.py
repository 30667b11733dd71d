"""Synthetic scene generation, COCO-style JSON IO, rasterization and export.

The scene file extends COCO with a ``structure`` field per annotation
because stock COCO has no way to express open polylines::

    {"images": [{"id": 0, "width": 256, "height": 256}],
     "annotations": [{"id": 1, "image_id": 0, "category_id": 0,
                      "structure": "polygon", "points": [x1, y1, ...]}],
     "categories": [{"id": 0, "name": "building", "structure": "polygon"}, ...]}

Points are normalized to [0, 1]. Prediction files use the same layout and
add ``score``, ``keypoint_prob``, ``dense_points``, ``class_probs`` and
``layer`` to each annotation.
"""
from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import (
    CLASS_NAMES,
    CLASS_TABLE,
    Config,
    PredictedVector,
    Scene,
    StructureKind,
    VectorInstance,
    close_ring,
    validate_instance,
)

DEFAULT_CLASS_MIX = (0.706, 0.189, 0.105)
CLASS_COLORS = {0: "#d62728", 1: "#1f77b4", 2: "#2ca02c"}
_IDS_PER_SCENE = 1000


class SceneFormatError(ValueError):
    """Raised for malformed or schema-violating scene files."""


@dataclass(frozen=True)
class GenParams:
    seed: int = 0
    n_scenes: int = 1
    instances_per_scene: tuple[int, int] = (5, 20)
    class_mix: tuple[float, float, float] = DEFAULT_CLASS_MIX
    raster_size: int = 256
    jitter: float = 0.003

    def __post_init__(self):
        lo, hi = self.instances_per_scene
        if not 0 <= lo <= hi or hi >= _IDS_PER_SCENE:
            raise ValueError(f"bad instances_per_scene range {self.instances_per_scene}")
        if self.seed < 0 or self.n_scenes < 0 or self.raster_size < 1:
            raise ValueError("seed, n_scenes and raster_size must be non-negative/positive")
        mix = np.asarray(self.class_mix, dtype=float)
        if mix.shape != (3,) or np.any(mix < 0) or abs(mix.sum() - 1.0) > 1e-9:
            raise ValueError(f"class_mix must be 3 non-negative values summing to 1, got {self.class_mix}")


def _rng(*key: int) -> np.random.Generator:
    # one independent stream per (seed, scene, instance) key
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in key]))


# -- shape makers -----------------------------------------------------------

def _convex_building(rng):
    k = int(rng.integers(4, 13))
    a, b = rng.uniform(0.02, 0.08, size=2)
    margin = max(a, b) + 0.01
    c = rng.uniform(margin, 1 - margin, size=2)
    while True:
        ang = np.sort(rng.uniform(0, 2 * np.pi, size=k))
        gaps = np.diff(np.concatenate([ang, ang[:1] + 2 * np.pi]))
        if gaps.min() > np.pi / (2 * k):
            break
    rot = rng.uniform(0, 2 * np.pi)
    ca, sa = np.cos(rot), np.sin(rot)
    ex, ey = a * np.cos(ang), b * np.sin(ang)
    return np.stack([c[0] + ca * ex - sa * ey, c[1] + sa * ex + ca * ey], axis=1)


def _rectilinear_building(rng):
    w, h = rng.uniform(0.03, 0.15, size=2)
    x0 = rng.uniform(0.01, 0.99 - w)
    y0 = rng.uniform(0.01, 0.99 - h)
    x1, y1 = x0 + w, y0 + h
    if rng.random() < 0.5:
        return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
    xm = x0 + w * rng.uniform(0.3, 0.7)
    ym = y0 + h * rng.uniform(0.3, 0.7)
    return np.array([[x0, y0], [x1, y0], [x1, ym], [xm, ym], [xm, y1], [x0, y1]])


def _building(rng):
    pts = _convex_building(rng) if rng.random() < 0.5 else _rectilinear_building(rng)
    pts = np.roll(pts, int(rng.integers(len(pts))), axis=0)
    if rng.random() < 0.5:
        pts = pts[::-1]
    return pts


def _road(rng):
    n = int(rng.integers(3, 16))
    step = rng.uniform(0.03, 0.08)
    p = rng.uniform(0.1, 0.9, size=2)
    heading = rng.uniform(0, 2 * np.pi)
    pts = [p]
    while len(pts) < n:
        heading += rng.normal(0.0, 0.25)
        q = p + step * np.array([np.cos(heading), np.sin(heading)])
        if np.any(q < 0.01) or np.any(q > 0.99):
            heading = math.atan2(0.5 - p[1], 0.5 - p[0]) + rng.normal(0.0, 0.1)
            q = p + step * np.array([np.cos(heading), np.sin(heading)])
        pts.append(q)
        p = q
    return np.clip(np.array(pts), 0.0, 1.0)


def _segment(rng):
    while True:
        p0 = rng.uniform(0.05, 0.95, size=2)
        ang = rng.uniform(0, 2 * np.pi)
        length = rng.uniform(0.05, 0.3)
        p1 = np.clip(p0 + length * np.array([np.cos(ang), np.sin(ang)]), 0.01, 0.99)
        if np.hypot(*(p1 - p0)) >= 0.02:
            return np.array([p0, p1])


_MAKERS = {0: _building, 1: _road, 2: _segment}


def _make_instance(seed, scene_index, inst_index, mix):
    rng = _rng(seed, scene_index, inst_index + 1)
    cls = int(rng.choice(3, p=mix))
    while True:
        pts = _MAKERS[cls](rng)
        v = VectorInstance(CLASS_TABLE[cls], cls, pts, id=scene_index * _IDS_PER_SCENE + inst_index + 1)
        if not validate_instance(v):
            return v


def generate_scene(p: GenParams, scene_index: int) -> Scene:
    lo, hi = p.instances_per_scene
    count = int(_rng(p.seed, scene_index, 0).integers(lo, hi + 1))
    mix = np.asarray(p.class_mix, dtype=float)
    insts = [_make_instance(p.seed, scene_index, i, mix) for i in range(count)]
    return Scene(image_id=scene_index, raster_size=p.raster_size, instances=insts)


def generate_scenes(p: GenParams) -> list[Scene]:
    return [generate_scene(p, s) for s in range(p.n_scenes)]


def jitter_scene(scene: Scene, std: float, seed: int, score_range=(0.5, 1.0)) -> Scene:
    """Predicted-like copy: Gaussian point noise plus random confidence scores."""
    out = []
    for k, v in enumerate(scene.instances):
        rng = _rng(seed, scene.image_id, k + 1, 7)
        pts = np.clip(v.xy + rng.normal(0.0, std, size=v.xy.shape), 0.0, 1.0)
        score = float(rng.uniform(*score_range))
        cand = VectorInstance(v.kind, v.class_id, pts, id=v.id, score=score)
        if validate_instance(cand):
            cand = VectorInstance(v.kind, v.class_id, v.points, id=v.id, score=score)
        out.append(cand)
    return Scene(scene.image_id, scene.raster_size, out)


# -- JSON IO ----------------------------------------------------------------

def _atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _categories():
    return [
        {"id": cid, "name": CLASS_NAMES[cid], "structure": kind.value}
        for cid, kind in sorted(CLASS_TABLE.items())
    ]


def _annotation(v: VectorInstance, image_id: int) -> dict:
    return {
        "id": v.id,
        "image_id": image_id,
        "category_id": v.class_id,
        "structure": v.kind.value,
        "points": [c for p in v.points for c in p],
    }


def scenes_to_dict(scenes) -> dict:
    images, anns = [], []
    for s in scenes:
        images.append({"id": s.image_id, "width": s.raster_size, "height": s.raster_size})
        anns.extend(_annotation(v, s.image_id) for v in s.instances)
    return {"images": images, "annotations": anns, "categories": _categories()}


def save_scenes(scenes, path) -> None:
    # float repr is the shortest decimal string that round-trips exactly
    _atomic_write_text(path, json.dumps(scenes_to_dict(scenes), indent=1))


def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise SceneFormatError(f"malformed JSON in {path}: {exc}") from exc


def _parse_annotation(ann, sizes, pixel_coords, cfg):
    aid = ann.get("id", "?")
    try:
        kind = StructureKind(ann["structure"])
    except KeyError:
        raise SceneFormatError(f"annotation {aid}: missing structure") from None
    except ValueError:
        raise SceneFormatError(f"annotation {aid}: unknown structure {ann['structure']!r}") from None
    flat = ann.get("points")
    if not isinstance(flat, list) or len(flat) % 2:
        raise SceneFormatError(f"annotation {aid}: points must be a flat list of x, y pairs")
    pts = np.asarray(flat, dtype=float).reshape(-1, 2)
    if pixel_coords:
        w, h = sizes[ann["image_id"]]
        pts = pts / np.array([w, h], dtype=float)
    if np.any(~np.isfinite(pts)) or np.any((pts < 0) | (pts > 1)):
        raise SceneFormatError(f"annotation {aid}: coordinate out of range")
    v = VectorInstance(kind, int(ann["category_id"]), pts, id=int(ann["id"]), score=float(ann.get("score", 1.0)))
    problems = validate_instance(v, cfg)
    if problems:
        raise SceneFormatError(f"annotation {aid}: {'; '.join(problems)}")
    return v


def _parse(data, pixel_coords, cfg):
    if not isinstance(data, dict):
        raise SceneFormatError("top level must be a JSON object")
    images = data.get("images", [])
    anns = data.get("annotations", [])
    if not images and not anns:
        return [], {}
    sizes = {}
    for im in images:
        if im.get("width") != im.get("height"):
            raise SceneFormatError(f"image {im.get('id')}: only square rasters are supported")
        sizes[im["id"]] = (im["width"], im["height"])
    per_image = {iid: [] for iid in sizes}
    raw = {iid: [] for iid in sizes}
    for ann in anns:
        iid = ann.get("image_id")
        if iid not in sizes:
            raise SceneFormatError(f"annotation {ann.get('id')}: unknown image_id {iid}")
        per_image[iid].append(_parse_annotation(ann, sizes, pixel_coords, cfg))
        raw[iid].append(ann)
    scenes = []
    for iid, insts in per_image.items():
        ids = [v.id for v in insts]
        if len(set(ids)) != len(ids):
            raise SceneFormatError(f"image {iid}: duplicate annotation ids")
        if cfg is not None and len(insts) > cfg.n_queries:
            raise SceneFormatError(f"image {iid}: {len(insts)} instances exceed n_queries={cfg.n_queries}")
        scenes.append(Scene(iid, sizes[iid][0], insts))
    return scenes, raw


def load_scenes(path, pixel_coords: bool = False, cfg: Config | None = None) -> list[Scene]:
    """Read a scene file; ``pixel_coords`` divides coordinates by the image size."""
    scenes, _ = _parse(_read_json(path), pixel_coords, cfg)
    return scenes


def save_predictions(preds: dict[int, list[PredictedVector]], raster_sizes: dict[int, int], path) -> None:
    images, anns = [], []
    for iid in sorted(preds):
        images.append({"id": iid, "width": raster_sizes[iid], "height": raster_sizes[iid]})
        for pv in preds[iid]:
            ann = _annotation(pv.instance, iid)
            ann["score"] = pv.instance.score
            if pv.dense_points is not None:
                ann["dense_points"] = [float(c) for c in np.asarray(pv.dense_points).ravel()]
            if pv.keypoint_prob is not None:
                ann["keypoint_prob"] = [float(c) for c in pv.keypoint_prob]
            if pv.class_probs is not None:
                ann["class_probs"] = [float(c) for c in pv.class_probs]
            if pv.layer is not None:
                ann["layer"] = int(pv.layer)
            anns.append(ann)
    doc = {"images": images, "annotations": anns, "categories": _categories()}
    _atomic_write_text(path, json.dumps(doc, indent=1))


def load_predictions(path, pixel_coords: bool = False) -> tuple[dict[int, list[PredictedVector]], dict[int, int]]:
    """Read a prediction file (a plain scene file is accepted with score 1)."""
    scenes, raw = _parse(_read_json(path), pixel_coords, None)
    preds, sizes = {}, {}
    for s in scenes:
        sizes[s.image_id] = s.raster_size
        out = []
        for v, ann in zip(s.instances, raw.get(s.image_id, [])):
            dense = ann.get("dense_points")
            kp = ann.get("keypoint_prob")
            probs = ann.get("class_probs")
            if dense is not None:
                dense = np.asarray(dense, dtype=float).reshape(-1, 2)
                if kp is None or len(kp) != len(dense):
                    raise SceneFormatError(f"annotation {v.id}: keypoint_prob must match dense_points")
            out.append(PredictedVector(
                v,
                dense_points=dense,
                keypoint_prob=None if kp is None else np.asarray(kp, dtype=float),
                class_probs=None if probs is None else np.asarray(probs, dtype=float),
                layer=ann.get("layer"),
            ))
        preds[s.image_id] = out
    return preds, sizes


# -- rasterization ----------------------------------------------------------

def _pixel_index(u, S):
    return np.minimum(np.floor(np.asarray(u) * S).astype(int), S - 1)


def bresenham(r0, c0, r1, c1):
    """Integer pixels on the line from (r0, c0) to (r1, c1), endpoints included."""
    rows, cols = [], []
    dr, dc = abs(r1 - r0), abs(c1 - c0)
    sr = 1 if r1 >= r0 else -1
    sc = 1 if c1 >= c0 else -1
    err = dc - dr
    r, c = r0, c0
    while True:
        rows.append(r)
        cols.append(c)
        if r == r1 and c == c1:
            break
        e2 = 2 * err
        if e2 > -dr:
            err -= dr
            c += sc
        if e2 < dc:
            err += dc
            r += sr
    return np.array(rows), np.array(cols)


def _stroke(img, pts, closed, stroke_px):
    S = img.shape[0]
    ij = _pixel_index(pts, S)
    pairs = list(zip(ij[:-1], ij[1:]))
    if closed:
        pairs.append((ij[-1], ij[0]))
    lo = -((stroke_px - 1) // 2)
    hi = stroke_px // 2
    for (c0, r0), (c1, r1) in pairs:
        rr, cc = bresenham(int(r0), int(c0), int(r1), int(c1))
        for dr in range(lo, hi + 1):
            for dc in range(lo, hi + 1):
                r, c = rr + dr, cc + dc
                ok = (r >= 0) & (r < S) & (c >= 0) & (c < S)
                img[r[ok], c[ok]] = 1.0


def _fill(img, pts):
    S = img.shape[0]
    P = np.asarray(pts) * S
    c_lo = max(int(np.floor(P[:, 0].min())), 0)
    c_hi = min(int(np.ceil(P[:, 0].max())), S)
    r_lo = max(int(np.floor(P[:, 1].min())), 0)
    r_hi = min(int(np.ceil(P[:, 1].max())), S)
    if c_lo >= c_hi or r_lo >= r_hi:
        return
    px, py = np.meshgrid(np.arange(c_lo, c_hi) + 0.5, np.arange(r_lo, r_hi) + 0.5)
    inside = np.zeros(px.shape, dtype=bool)
    xj, yj = P[-1]
    # even-odd rule at pixel centers with half-open edges
    for xi, yi in P:
        crosses = (yi > py) != (yj > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = (xj - xi) * (py - yi) / (yj - yi) + xi
        inside ^= crosses & (px < xint)
        xj, yj = xi, yi
    img[r_lo:r_hi, c_lo:c_hi][inside] = 1.0


def rasterize(scene: Scene, stroke_px: int = 1, classes=None, size: int | None = None) -> np.ndarray:
    """Render a scene to an S x S float image in [0, 1].

    Polygons are filled by the even-odd rule sampled at pixel centers and
    outlined; open shapes are drawn with Bresenham lines between the pixels
    ``min(floor(u * S), S - 1)`` and thickened by a ``stroke_px`` square.
    """
    if stroke_px < 1:
        raise ValueError("stroke_px must be >= 1")
    S = size or scene.raster_size
    img = np.zeros((S, S), dtype=float)
    for v in scene.instances:
        if classes is not None and v.class_id not in classes:
            continue
        if v.kind.closed:
            _fill(img, v.xy)
        _stroke(img, v.xy, v.kind.closed, stroke_px)
    return img


# -- export -----------------------------------------------------------------

def _svg(scene: Scene) -> str:
    S = scene.raster_size
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{S}" height="{S}" viewBox="0 0 {S} {S}">',
        f'<rect width="{S}" height="{S}" fill="white"/>',
    ]
    for v in scene.instances:
        color = CLASS_COLORS.get(v.class_id, "#000000")
        pts = " ".join(f"{x * S!r},{y * S!r}" for x, y in v.points)
        attrs = f'data-id="{v.id}" data-class="{v.class_id}" stroke="{color}" stroke-width="1"'
        if v.kind is StructureKind.POLYGON:
            lines.append(f'<polygon points="{pts}" fill="{color}" fill-opacity="0.3" {attrs}/>')
        elif v.kind is StructureKind.POLYLINE:
            lines.append(f'<polyline points="{pts}" fill="none" {attrs}/>')
        else:
            (x1, y1), (x2, y2) = v.points
            lines.append(f'<line x1="{x1 * S!r}" y1="{y1 * S!r}" x2="{x2 * S!r}" y2="{y2 * S!r}" {attrs}/>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def _geojson(scene: Scene) -> dict:
    feats = []
    for v in scene.instances:
        if v.kind.closed:
            geom = {"type": "Polygon", "coordinates": [[list(p) for p in close_ring(v.points)]]}
        else:
            geom = {"type": "LineString", "coordinates": [list(p) for p in v.points]}
        props = {"class_id": v.class_id, "id": v.id, "structure": v.kind.value, "score": v.score}
        feats.append({"type": "Feature", "geometry": geom, "properties": props})
    return {"type": "FeatureCollection", "image_id": scene.image_id, "raster_size": scene.raster_size,
            "features": feats}


def export(scenes, fmt: str, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    paths = []
    for s in scenes:
        if fmt == "svg":
            path = out_dir / f"scene_{s.image_id}.svg"
            _atomic_write_text(path, _svg(s))
        elif fmt == "geojson":
            path = out_dir / f"scene_{s.image_id}.geojson"
            _atomic_write_text(path, json.dumps(_geojson(s)))
        else:
            raise ValueError(f"unknown export format {fmt!r}")
        paths.append(path)
    return paths


def import_geojson(path) -> Scene:
    doc = _read_json(path)
    insts = []
    for f in doc.get("features", []):
        geom, props = f["geometry"], f.get("properties", {})
        cls = int(props["class_id"])
        if geom["type"] == "Polygon":
            ring = geom["coordinates"][0]
            if len(ring) > 1 and ring[0] == ring[-1]:
                ring = ring[:-1]
            kind, pts = StructureKind.POLYGON, ring
        elif geom["type"] == "LineString":
            kind = StructureKind(props.get("structure", CLASS_TABLE[cls].value))
            pts = geom["coordinates"]
        else:
            raise SceneFormatError(f"unsupported geometry {geom['type']!r}")
        insts.append(VectorInstance(kind, cls, pts, id=int(props.get("id", 0)),
                                    score=float(props.get("score", 1.0))))
    return Scene(int(doc.get("image_id", 0)), int(doc.get("raster_size", 256)), insts)
