"""Acceptance criteria 1-9, one test each.

Every test records a ``criterion N: PASS|FAIL ...`` line, printed in the
pytest terminal summary. Run directly with ``python3 tests/test_acceptance.py``.
"""
import itertools
import json
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))
from conftest import ACCEPTANCE_LINES  # noqa: E402
from oracles import brute_match, central_diff, coco_ap_reference, polis_shapely, shoelace  # noqa: E402

from vecextract.decoder import Trace, decode
from vecextract.dsc import LossWeights, MatchProblem, descent_fit, loss_vsl, point_match
from vecextract.encoder import encode
from vecextract.features import build_pyramid
from vecextract.geometry import Config, Scene, StructureKind, VectorInstance
from vecextract.metrics import coco_map, evaluate
from vecextract.params import init_params, zero_params
from vecextract.sampling import canonical_points, orientation_candidates, resample_uniform, top_left_start
from vecextract.scene_io import (
    GenParams,
    export,
    generate_scenes,
    import_geojson,
    load_predictions,
    load_scenes,
    rasterize,
    save_scenes,
)

POLY, LINE = StructureKind.POLYGON, StructureKind.POLYLINE
CLI = [sys.executable, "-m", "vecextract"]


def record(n, ok, detail, secs):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} ({secs:.1f}s) {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def test_criterion_1_matching_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    bad = 0
    for _ in range(200):
        M = int(rng.integers(2, 7))
        T = int(rng.integers(1, min(M, 4) + 1))
        P, c, G = rng.random((M, 2)), rng.random(M), rng.random((T, 2))
        closed = T >= 3 and rng.random() < 0.5
        prob = MatchProblem(P, c, G, POLY if closed else LINE)
        for mode, mono in (("monotone", True), ("hungarian", False)):
            cost, assignment, orient = brute_match(P, c, G, closed, mono)
            res = point_match(prob, mode=mode)
            bad += not (res.cost == cost and tuple(res.assignment) == assignment and res.orientation == orient)
    dt = time.perf_counter() - t0
    ok = bad == 0 and dt < 10
    record(1, ok, f"{400 - bad}/400 exact (200 problems x 2 modes)", dt)
    assert ok


def _kink_free(prob, match, h):
    # away from l1 kinks, clamp edges and alignment switches
    d = np.abs(prob.pred_points[match.assignment] - match.gt_points)
    if d.min() < 10 * h or prob.pred_prob.min() < 1e-3 or prob.pred_prob.max() > 1 - 1e-3:
        return False
    for idx in np.ndindex(prob.pred_points.shape):
        for s in (h, -h):
            P = prob.pred_points.copy()
            P[idx] += s
            m = point_match(MatchProblem(P, prob.pred_prob, prob.gt_points, prob.kind))
            if not np.array_equal(m.assignment, match.assignment) or m.orientation != match.orientation:
                return False
    return True


def test_criterion_2_gradients():
    t0 = time.perf_counter()
    rng = np.random.default_rng(102)
    h = 1e-5
    worst, done, skipped = 0.0, 0, 0
    w = LossWeights()
    while done < 100:
        T = int(rng.integers(3, 6))
        prob = MatchProblem(rng.uniform(0.1, 0.9, (8, 2)), rng.uniform(0.05, 0.95, 8),
                            rng.uniform(0.2, 0.8, (T, 2)), POLY if rng.random() < 0.5 else LINE)
        res = loss_vsl(prob, w)
        if not _kink_free(prob, res.match, h):
            skipped += 1
            continue
        done += 1

        def fp(P):
            return loss_vsl(MatchProblem(P, prob.pred_prob, prob.gt_points, prob.kind), w, match=res.match).value

        def fc(c):
            return loss_vsl(MatchProblem(prob.pred_points, c, prob.gt_points, prob.kind), w, match=res.match).value

        for fd, an in ((central_diff(fp, prob.pred_points, h), res.grad_points),
                       (central_diff(fc, prob.pred_prob, h), res.grad_prob)):
            scale = np.maximum(np.maximum(np.abs(fd), np.abs(an)), 1e-6)
            worst = max(worst, float(np.max(np.abs(fd - an) / scale)))
    dt = time.perf_counter() - t0
    ok = worst < 1e-4 and dt < 30
    record(2, ok, f"max rel err {worst:.2e} on 100 problems ({skipped} near kinks/ties redrawn)", dt)
    assert ok


def test_criterion_3_shape_recovery():
    t0 = time.perf_counter()
    sq = np.array([(0.3, 0.3), (0.7, 0.3), (0.7, 0.7), (0.3, 0.7)])
    base = resample_uniform(VectorInstance(POLY, 0, sq), 12).points
    scores = []
    for seed in range(10):
        rng = np.random.default_rng(seed)
        init = base + rng.normal(0, 0.03, base.shape)
        fit = descent_fit(init, rng.uniform(0.2, 0.8, 12), sq, POLY, steps=2000, lr=0.05)
        scores.append(polis_shapely(fit.match.matched_points, sq))
    dt = time.perf_counter() - t0
    wins = sum(s < 0.01 for s in scores)
    ok = wins >= 9 and dt < 60
    record(3, ok, f"{wins}/10 seeds PoLiS < 0.01 (worst {max(scores):.2e})", dt)
    assert ok


def test_criterion_4_decoder_invariants():
    t0 = time.perf_counter()
    cfg = Config(n_queries=50, n_points=40, channels=64, n_layers=6)
    params = init_params(cfg, 0)
    zeros = zero_params(cfg)
    scenes = generate_scenes(GenParams(seed=104, n_scenes=20))
    rng = np.random.default_rng(104)
    worst_row, refs_ok, fixed_ok, equi_ok = 0.0, True, True, True
    for s in scenes:
        F = build_pyramid(rasterize(s), cfg, s.image_id)
        tr = Trace()
        st = encode(F, params, cfg, tr)
        preds = decode(st, F, params, cfg, tr)
        worst_row = max(worst_row, max(float(np.abs(w.sum(-1) - 1).max()) for w in tr.softmax_rows))
        refs_ok &= all(bool(np.all((r.point_refs > 0) & (r.point_refs < 1))) for r in tr.references)
        refs_ok &= all(bool(np.all((p.refs.instance_refs > 0) & (p.refs.instance_refs < 1))) for p in preds)
        perm = rng.permutation(cfg.n_queries)
        moved = decode(st.permuted(perm), F, params, cfg)
        for a, b in zip(preds, moved):
            equi_ok &= all(np.array_equal(x[perm], y) for x, y in (
                (a.points, b.points), (a.keypoint_prob, b.keypoint_prob),
                (a.class_logits, b.class_logits), (a.bbox, b.bbox)))
        z = encode(F, zeros, cfg)
        for p in decode(z, F, zeros, cfg):
            fixed_ok &= np.array_equal(p.points, np.broadcast_to(z.instance_refs[:, None], p.points.shape))
    dt = time.perf_counter() - t0
    ok = worst_row <= 1e-6 and refs_ok and fixed_ok and equi_ok and dt < 120
    record(4, ok, f"20 scenes: softmax err {worst_row:.1e}, refs in (0,1) {refs_ok}, "
                  f"fixed point {fixed_ok}, equivariance {equi_ok}", dt)
    assert ok


def test_criterion_5_sampling_invariants():
    t0 = time.perf_counter()
    rng = np.random.default_rng(105)
    spacing, canon, rev = 0.0, True, True
    for _ in range(1000):
        n = int(rng.integers(3, 12))
        ang = np.sort(rng.uniform(0, 2 * np.pi, n))
        r = rng.uniform(0.05, 0.3, n)
        pts = np.c_[0.5 + r * np.cos(ang), 0.5 + r * np.sin(ang)]
        v = VectorInstance(POLY, 0, pts if rng.random() < 0.5 else pts[::-1])
        s = resample_uniform(v, int(rng.integers(n, 41)))
        gaps = np.diff(s.arc_params)
        spacing = max(spacing, float(np.abs(gaps - gaps[0]).max() / gaps[0]))
        cp = canonical_points(v)
        canon &= shoelace(cp.tolist()) >= 0 and top_left_start(cp) == 0
        line = VectorInstance(LINE, 1, rng.uniform(0.05, 0.95, (int(rng.integers(2, 8)), 2)))
        f, b = orientation_candidates(line, 20)
        rev &= np.array_equal(f.points[::-1], b.points) and np.array_equal(f.key_flags[::-1], b.key_flags)
    dt = time.perf_counter() - t0
    ok = spacing <= 1e-9 and canon and rev and dt < 10
    record(5, ok, f"1000 polygons: spacing rel err {spacing:.1e}, canonical {canon}, reversal exact {rev}", dt)
    assert ok


def _tiny_coco_case(rng):
    def quad():
        c = rng.uniform(0.3, 0.7, 2)
        ang = np.sort(rng.uniform(0, 2 * np.pi, 4))
        return c + rng.uniform(0.05, 0.15) * np.c_[np.cos(ang), np.sin(ang)]

    gts = [quad() for _ in range(int(rng.integers(1, 6)))]
    preds = []
    for _ in range(int(rng.integers(0, 6))):
        if rng.random() < 0.7:
            b = gts[int(rng.integers(len(gts)))]
            c = b.mean(0)
            preds.append(np.clip(c + rng.uniform(0.8, 1.2) * (b - c) + rng.normal(0, 0.02, 2), 0, 1))
        else:
            preds.append(quad())
    g = Scene(0, 256, [VectorInstance(POLY, 0, p, id=i) for i, p in enumerate(gts)])
    d = Scene(0, 256, [VectorInstance(POLY, 0, p, id=i, score=float(np.round(rng.random(), 2)))
                       for i, p in enumerate(preds)])
    return d, g


def test_criterion_6_metric_identities(frozen):
    t0 = time.perf_counter()
    scenes = generate_scenes(GenParams(seed=106, n_scenes=20))
    r = evaluate(scenes, scenes)
    ident = (r.map == 1 and r.iou == 1 and r.ciou == 1 and abs(r.polis) <= 1e-9 and r.f1 == 1
             and r.apls == 1 and r.sap10 == 1)
    rng = np.random.default_rng(106)
    diffs = []
    for _ in range(100):
        d, g = _tiny_coco_case(rng)
        diffs.append(abs(coco_map([d], [g]) - coco_ap_reference([d], [g])))
    for case in frozen["coco"]:
        if case["map"] is None:
            continue
        g = Scene(0, 256, [VectorInstance(POLY, 0, p, id=i) for i, p in enumerate(case["gt"])])
        d = Scene(0, 256, [VectorInstance(POLY, 0, p, id=i, score=s)
                           for i, (p, s) in enumerate(zip(case["pred"], case["scores"]))])
        diffs.append(abs(coco_map([d], [g]) - case["map"]))
    dt = time.perf_counter() - t0
    ok = ident and max(diffs) <= 1e-12 and dt < 60
    record(6, ok, f"self-eval identities {ident}; coco_map vs reference max diff {max(diffs):.1e} "
                  f"over {len(diffs)} cases", dt)
    assert ok


def test_criterion_7_orientation_selection():
    t0 = time.perf_counter()
    rng = np.random.default_rng(107)
    good = 0
    for _ in range(500):
        n = int(rng.integers(2, 7))
        kind = LINE if n > 2 or rng.random() < 0.5 else StructureKind.SEGMENT
        v = VectorInstance(kind, 1 if kind is LINE else 2, rng.uniform(0.05, 0.95, (n, 2)))
        s = resample_uniform(v, 20).reversed()
        pred = np.clip(s.points + rng.normal(0, 0.005, s.points.shape), 0, 1)
        prob = np.clip(s.key_flags * 0.8 + 0.1 + rng.normal(0, 0.05, 20), 0, 1)
        res = point_match(MatchProblem.from_instance(pred, prob, v))
        good += res.orientation == "reversed" and res.alternatives["reversed"] <= res.alternatives["forward"]
    dt = time.perf_counter() - t0
    ok = good == 500 and dt < 10
    record(7, ok, f"{good}/500 reversed predictions picked the reversed candidate", dt)
    assert ok


def test_criterion_8_io_round_trips(tmp_path):
    t0 = time.perf_counter()
    scenes = generate_scenes(GenParams(seed=108, n_scenes=5))
    save_scenes(scenes, tmp_path / "s.json")
    json_ok = load_scenes(tmp_path / "s.json") == scenes
    worst = 0.0
    for f in export(scenes, "geojson", tmp_path / "geo"):
        back = import_geojson(f)
        ref = {s.image_id: s for s in scenes}[back.image_id]
        for a, b in zip(ref.instances, back.instances, strict=True):
            worst = max(worst, float(np.abs(a.xy - b.xy).max()))
    outs = []
    for k in range(2):
        out = tmp_path / f"gen{k}.json"
        subprocess.run(CLI + ["gen", "--seed", "8", "--count", "5", "--out", str(out)], check=True,
                       capture_output=True)
        outs.append(out.read_bytes())
    gen_ok = outs[0] == outs[1]
    dt = time.perf_counter() - t0
    ok = json_ok and worst <= 1e-12 and gen_ok
    record(8, ok, f"JSON exact {json_ok}, GeoJSON max err {worst:.1e}, gen byte-identical {gen_ok}", dt)
    assert ok


def test_criterion_9_end_to_end(tmp_path):
    t0 = time.perf_counter()

    def run(*args):
        return subprocess.run(CLI + [str(a) for a in args], capture_output=True, text=True, timeout=120)

    gt, ras, pred = tmp_path / "gt.json", tmp_path / "r.npz", tmp_path / "pred.json"
    steps = [
        run("gen", "--seed", 9, "--count", 10, "--out", gt),
        run("rasterize", "--scenes", gt, "--out", ras),
        run("infer", "--rasters", ras, "--seed", 0, "--out", pred),
        run("match", "--pred", pred, "--gt", gt, "--out", tmp_path / "m.json"),
        run("loss", "--pred", pred, "--gt", gt, "--out", tmp_path / "l.json"),
        run("eval", "--pred", pred, "--gt", gt, "--out", tmp_path / "rep.json"),
    ]
    codes = [p.returncode for p in steps]
    ok = all(c == 0 for c in codes)
    detail = f"exit codes {codes}"
    if ok:
        preds, sizes = load_predictions(pred)
        m = json.loads((tmp_path / "m.json").read_text())
        losses = json.loads((tmp_path / "l.json").read_text())
        rep = json.loads((tmp_path / "rep.json").read_text())
        schema = (len(sizes) == 10 and len(m["images"]) == 10
                  and all({"pairs", "cost", "orientation"} <= set(i) for i in m["images"])
                  and {"map", "iou", "ciou", "polis", "f1", "apls", "sap10", "sf10"} <= set(rep))
        finite = all(np.isfinite(v) for i in losses["images"] for v in i["losses"].values())
        n_pred = sum(map(len, preds.values()))
        ok = schema and finite
        detail += f", schema {schema}, finite losses {finite}, {n_pred} predictions"
    dt = time.perf_counter() - t0
    ok = ok and dt < 120
    record(9, ok, detail, dt)
    assert ok, "\n".join(p.stderr for p in steps)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
