"""Fast invariant checks across all modules, used by ``vecextract selftest``.

Each check returns ``(ok, detail)``. Sizes are small so the whole suite runs
in a few seconds; the test suite covers the same properties at full size.
"""
from __future__ import annotations

import itertools
import tempfile
import time
from pathlib import Path

import numpy as np

from .decoder import Trace, decode
from .dsc import LossWeights, MatchProblem, alignment_cost, cost_matrix, loss_vsl, point_match
from .encoder import encode
from .features import build_pyramid
from .geometry import Config, StructureKind, VectorInstance, signed_area
from .metrics import evaluate
from .params import init_params, zero_params
from .sampling import canonical_points, orientation_candidates, resample_uniform, top_left_start
from .scene_io import GenParams, export, generate_scenes, import_geojson, load_scenes, rasterize, save_scenes


def _random_polygon(rng, n):
    ang = np.sort(rng.uniform(0, 2 * np.pi, n))
    r = rng.uniform(0.1, 0.3, n)
    pts = np.c_[0.5 + r * np.cos(ang), 0.5 + r * np.sin(ang)]
    if rng.random() < 0.5:
        pts = pts[::-1]
    return VectorInstance(StructureKind.POLYGON, 0, pts)


def check_sampling():
    rng = np.random.default_rng(0)
    for _ in range(100):
        v = _random_polygon(rng, int(rng.integers(3, 10)))
        s = resample_uniform(v, 24)
        gaps = np.diff(s.arc_params)
        if np.abs(gaps - gaps[0]).max() > 1e-9 * gaps[0]:
            return False, "non-uniform spacing"
        cp = canonical_points(v)
        if signed_area(cp) < 0 or top_left_start(cp) != 0:
            return False, "non-canonical polygon"
    line = VectorInstance(StructureKind.POLYLINE, 1, rng.uniform(0.1, 0.9, (5, 2)))
    fwd, rev = orientation_candidates(line, 12)
    if not np.array_equal(fwd.points[::-1], rev.points):
        return False, "reversal mismatch"
    return True, "100 polygons, 1 polyline"


def _brute(C, monotone):
    T, M = C.shape
    gen = itertools.combinations(range(M), T) if monotone else itertools.permutations(range(M), T)
    return min(alignment_cost(C, b) for b in gen)


def check_matching():
    rng = np.random.default_rng(1)
    for _ in range(40):
        M = int(rng.integers(2, 7))
        T = int(rng.integers(1, min(M, 4) + 1))
        prob = MatchProblem(rng.random((M, 2)), rng.random(M), rng.random((T, 2)), StructureKind.POLYGON)
        C = cost_matrix(prob.pred_points, prob.pred_prob, prob.gt_points)
        for mode, mono in (("monotone", True), ("hungarian", False)):
            if abs(point_match(prob, mode=mode).cost - _brute(C, mono)) > 1e-12:
                return False, f"{mode} differs from enumeration"
    return True, "40 problems, both modes"


def check_gradients():
    rng = np.random.default_rng(2)
    w = LossWeights()
    worst = 0.0
    for _ in range(5):
        G = rng.uniform(0.2, 0.8, (4, 2))
        P = rng.uniform(0.1, 0.9, (8, 2))
        c = rng.uniform(0.2, 0.8, 8)
        res = loss_vsl(MatchProblem(P, c, G, StructureKind.POLYGON), w)
        h = 1e-6
        for idx in np.ndindex(P.shape):
            Pp, Pm = P.copy(), P.copy()
            Pp[idx] += h
            Pm[idx] -= h
            fp = loss_vsl(MatchProblem(Pp, c, G, StructureKind.POLYGON), w, match=res.match).value
            fm = loss_vsl(MatchProblem(Pm, c, G, StructureKind.POLYGON), w, match=res.match).value
            fd = (fp - fm) / (2 * h)
            worst = max(worst, abs(fd - res.grad_points[idx]) / max(1e-3, abs(fd)))
    return worst < 1e-4, f"max rel err {worst:.2e}"


def check_decoder():
    cfg = Config(n_queries=4, n_points=6, channels=16, n_samples=4, n_layers=2, n_candidates=12, heads=4)
    scene = generate_scenes(GenParams(seed=3, raster_size=64))[0]
    F = build_pyramid(rasterize(scene), cfg, 0)
    p = init_params(cfg, 0)
    tr = Trace()
    state = encode(F, p, cfg, tr)
    preds = decode(state, F, p, cfg, tr)
    err = max(np.abs(w.sum(-1) - 1).max() for w in tr.softmax_rows)
    if err > 1e-6:
        return False, f"softmax row error {err:.1e}"
    if not all(((r.point_refs > 0) & (r.point_refs < 1)).all() for r in tr.references):
        return False, "reference left (0, 1)"
    perm = np.array([2, 0, 3, 1])
    for a, b in zip(preds, decode(state.permuted(perm), F, p, cfg)):
        if not np.array_equal(a.points[perm], b.points):
            return False, "not permutation equivariant"
    z = zero_params(cfg)
    s0 = encode(F, z, cfg)
    for pr in decode(s0, F, z, cfg):
        if not np.array_equal(pr.points, np.broadcast_to(s0.instance_refs[:, None], pr.points.shape)):
            return False, "zero-parameter fixed point broken"
    return True, "softmax, references, equivariance, fixed point"


def check_metrics():
    scenes = generate_scenes(GenParams(seed=4, n_scenes=2, instances_per_scene=(4, 8)))
    r = evaluate(scenes, scenes, apls_samples=50)
    ok = r.map == 1 and r.iou == 1 and r.f1 == 1 and r.apls == 1 and abs(r.polis) <= 1e-9
    return ok, f"map={r.map} iou={r.iou} f1={r.f1} apls={r.apls} polis={r.polis}"


def check_io():
    scenes = generate_scenes(GenParams(seed=5, n_scenes=2))
    with tempfile.TemporaryDirectory() as d:
        path = Path(d) / "s.json"
        save_scenes(scenes, path)
        if load_scenes(path) != scenes:
            return False, "scene JSON round trip"
        for f in export(scenes, "geojson", d):
            back = import_geojson(f)
            ref = next(s for s in scenes if s.image_id == back.image_id)
            for a, b in zip(ref.instances, back.instances):
                if np.abs(a.xy - b.xy).max() > 1e-12:
                    return False, "GeoJSON round trip"
    return True, "JSON exact, GeoJSON 1e-12"


CHECKS = {
    "sampling": check_sampling,
    "matching": check_matching,
    "gradients": check_gradients,
    "decoder": check_decoder,
    "metrics": check_metrics,
    "io": check_io,
}


def run_selftest():
    rows = []
    for name, fn in CHECKS.items():
        t0 = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:  # report, do not abort the table
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        rows.append((name, bool(ok), detail, time.perf_counter() - t0))
    return rows


def format_table(rows) -> str:
    width = max(len(r[0]) for r in rows)
    lines = [f"{'check':<{width}}  result  seconds  detail"]
    for name, ok, detail, dt in rows:
        lines.append(f"{name:<{width}}  {'PASS' if ok else 'FAIL':<6}  {dt:7.2f}  {detail}")
    return "\n".join(lines)
