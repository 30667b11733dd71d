"""Command-line front end.

Subcommands: gen, rasterize, infer, match, loss, fit, eval, export, selftest.
Machine-readable results go to stdout (or ``--out``); logs, including the
resolved run configuration as JSON, go to stderr.

Exit codes: 0 success, 1 validation or usage error, 2 IO error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .decoder import decode, extract_predictions
from .dsc import LossWeights, MatchProblem, descent_fit, instance_match, loss_vsl, point_match
from .encoder import encode
from .features import build_pyramid
from .geometry import Config, PredictedVector, Scene, StructureKind
from .metrics import describe, evaluate, polis
from .params import ParameterError, init_params, load_params
from .sampling import canonical_points, resample_uniform
from .scene_io import (
    GenParams,
    SceneFormatError,
    _atomic_write_text,
    export,
    generate_scenes,
    load_predictions,
    load_scenes,
    rasterize,
    save_predictions,
    save_scenes,
)

log = logging.getLogger("vecextract")

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # usage errors share the validation exit code; 2 is reserved for IO
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


@dataclass
class RunConfig:
    subcommand: str
    paths: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    loss_weights: dict = field(default_factory=dict)
    seed: int | None = None
    options: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, default=str)


# -- argument groups --------------------------------------------------------

def _add_model_flags(p):
    d = Config()
    g = p.add_argument_group("model dimensions")
    g.add_argument("--n-queries", type=int, default=d.n_queries, help=f"instance queries per image (default {d.n_queries})")
    g.add_argument("--m-points", type=int, default=d.n_points, help=f"points per instance (default {d.n_points})")
    g.add_argument("--channels", type=int, default=d.channels, help=f"feature width (default {d.channels})")
    g.add_argument("--e-samples", type=int, default=d.n_samples,
                   help=f"sampling points per query, spread over levels (default {d.n_samples})")
    g.add_argument("--layers", type=int, default=d.n_layers, help=f"decoder layers (default {d.n_layers})")
    g.add_argument("--k-coarse", type=int, default=d.n_candidates, help=f"coarse tokens kept (default {d.n_candidates})")
    g.add_argument("--scales", type=int, nargs="+", default=list(d.scales),
                   help=f"pyramid downsampling factors (default {' '.join(map(str, d.scales))})")
    g.add_argument("--heads", type=int, default=d.heads, help=f"attention heads (default {d.heads})")
    g.add_argument("--tau", "--keypoint-threshold", dest="tau", type=float, default=d.keypoint_threshold, help=f"key-point threshold (default {d.keypoint_threshold})")
    g.add_argument("--score-threshold", type=float, default=d.score_threshold,
                   help=f"minimum class probability of a kept instance (default {d.score_threshold})")


def _add_loss_flags(p):
    d = LossWeights()
    g = p.add_argument_group("matching and loss weights")
    g.add_argument("--alpha-p", type=float, default=d.match_point, help=f"point term of the match cost (default {d.match_point})")
    g.add_argument("--alpha-c", type=float, default=d.match_prob, help=f"key-point term of the match cost (default {d.match_prob})")
    g.add_argument("--alpha-dir", type=float, default=d.direction, help=f"direction loss weight (default {d.direction})")
    g.add_argument("--alpha-kp", type=float, default=d.keypoint, help=f"key-point position loss weight (default {d.keypoint})")
    g.add_argument("--alpha-cls", type=float, default=d.classification, help=f"key-point class loss weight (default {d.classification})")
    g.add_argument("--match-mode", choices=("monotone", "hungarian"), default="monotone",
                   help="order-preserving DP or unrestricted assignment (default monotone)")
    g.add_argument("--lambda-cls", type=float, default=2.0, help="class term of the instance cost (default 2)")
    g.add_argument("--lambda-pts", type=float, default=5.0, help="point term of the instance cost (default 5)")


def _config(a) -> Config:
    return Config(n_queries=a.n_queries, n_points=a.m_points, channels=a.channels, n_samples=a.e_samples, n_layers=a.layers, n_candidates=a.k_coarse,
                  scales=tuple(a.scales), heads=a.heads, keypoint_threshold=a.tau, score_threshold=a.score_threshold)


def _weights(a) -> LossWeights:
    return LossWeights(a.alpha_p, a.alpha_c, a.alpha_dir, a.alpha_kp, a.alpha_cls)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="vecextract", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="generate synthetic scenes")
    d = GenParams()
    p.add_argument("--seed", type=int, default=d.seed, help=f"generator seed (default {d.seed})")
    p.add_argument("--count", type=int, default=d.n_scenes, help=f"number of scenes (default {d.n_scenes})")
    p.add_argument("--min-instances", type=int, default=d.instances_per_scene[0],
                   help=f"fewest instances per scene (default {d.instances_per_scene[0]})")
    p.add_argument("--max-instances", type=int, default=d.instances_per_scene[1],
                   help=f"most instances per scene (default {d.instances_per_scene[1]})")
    p.add_argument("--class-mix", type=float, nargs=3, default=list(d.class_mix),
                   metavar=("BUILDING", "ROAD", "CENTER"), help="class proportions (default 0.706 0.189 0.105)")
    p.add_argument("--raster-size", type=int, default=d.raster_size, help=f"image side in pixels (default {d.raster_size})")
    p.add_argument("--out", required=True, help="output scene JSON")

    p = sub.add_parser("rasterize", help="rasterize scenes into an .npz archive")
    p.add_argument("--scenes", required=True, help="scene JSON")
    p.add_argument("--pixel-coords", action="store_true", help="input coordinates are in pixels")
    p.add_argument("--stroke-px", type=int, default=1, help="line stroke width (default 1)")
    p.add_argument("--out", required=True, help="output .npz, one array per image named image_<id>")

    p = sub.add_parser("infer", help="run the encoder and decoder on rasters")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--rasters", help=".npz written by rasterize")
    src.add_argument("--scenes", help="scene JSON, rasterized on the fly")
    p.add_argument("--pixel-coords", action="store_true", help="scene coordinates are in pixels")
    init = p.add_mutually_exclusive_group()
    init.add_argument("--params", help="parameter file (JSON manifest)")
    init.add_argument("--seed", type=int, default=0, help="seed for deterministic parameter init (default 0)")
    p.add_argument("--feature-seed", type=int, default=0, help="seed of the feature projections (default 0)")
    p.add_argument("--aux", action="store_true", help="also emit every intermediate decoder layer")
    p.add_argument("--jobs", type=int, default=1, help="worker processes across images (default 1)")
    p.add_argument("--out", required=True, help="output prediction JSON")
    _add_model_flags(p)

    for name, text in (("match", "instance and key-point matching of predictions to ground truth"),
                       ("loss", "matching plus shape losses of predictions against ground truth")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--pred", required=True, help="prediction JSON (plain scene JSON also accepted)")
        p.add_argument("--gt", required=True, help="ground-truth scene JSON")
        p.add_argument("--pixel-coords", action="store_true", help="coordinates are in pixels")
        p.add_argument("--out", help="write JSON here instead of stdout")
        _add_model_flags(p)
        _add_loss_flags(p)

    p = sub.add_parser("fit", help="fit jittered point sequences to ground-truth shapes by gradient descent")
    p.add_argument("--gt", required=True, help="ground-truth scene JSON")
    p.add_argument("--pixel-coords", action="store_true", help="coordinates are in pixels")
    p.add_argument("--steps", type=int, default=2000, help="descent steps (default 2000)")
    p.add_argument("--lr", type=float, default=0.05, help="learning rate (default 0.05)")
    p.add_argument("--jitter", type=float, default=0.03, help="std of the initial point jitter (default 0.03)")
    p.add_argument("--seed", type=int, default=0, help="jitter seed (default 0)")
    p.add_argument("--limit", type=int, default=None, help="fit at most this many instances")
    p.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")
    p.add_argument("--out", help="write JSON here instead of stdout")
    _add_model_flags(p)
    _add_loss_flags(p)

    p = sub.add_parser("eval", help="evaluate predictions against ground truth")
    p.add_argument("--pred", help="prediction or scene JSON")
    p.add_argument("--gt", help="ground-truth scene JSON")
    p.add_argument("--pixel-coords", action="store_true", help="coordinates are in pixels")
    p.add_argument("--layer", type=int, default=None, help="evaluate only this decoder layer (default: last)")
    p.add_argument("--tol-px", type=float, default=10.0, help="pixel F1 tolerance (default 10)")
    p.add_argument("--stroke-px", type=int, default=1, help="line stroke for pixel metrics (default 1)")
    p.add_argument("--apls-samples", type=int, default=200, help="APLS node pairs per direction (default 200)")
    p.add_argument("--snap-px", type=float, default=10.0, help="APLS snap radius (default 10)")
    p.add_argument("--sap-thresholds", type=int, nargs="+", default=[10, 15],
                   help="sAP/sF thresholds in pixels (default 10 15)")
    p.add_argument("--seed", type=int, default=0, help="APLS pair-sampling seed (default 0)")
    p.add_argument("--out", help="write the JSON report here instead of stdout")
    p.add_argument("--csv", help="also write the report as CSV")
    p.add_argument("--describe", action="store_true", help="print metric definitions and exit")

    p = sub.add_parser("export", help="export scenes or predictions as SVG or GeoJSON")
    p.add_argument("--scenes", required=True, help="scene or prediction JSON")
    p.add_argument("--pixel-coords", action="store_true", help="coordinates are in pixels")
    p.add_argument("--format", choices=("svg", "geojson"), required=True)
    p.add_argument("--out-dir", required=True, help="output directory")

    sub.add_parser("selftest", help="run the built-in invariant checks")
    return parser


# -- helpers ----------------------------------------------------------------

def _write_json(doc, path):
    text = json.dumps(doc, indent=1, allow_nan=False, default=_json_default)
    if path:
        _atomic_write_text(path, text + "\n")
    else:
        sys.stdout.write(text + "\n")


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def _map(fn, items, jobs):
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


def _pred_scenes(path, pixel_coords, layer=None):
    """Prediction file as scenes; keeps only ``layer`` (default: the last one present)."""
    preds, sizes = load_predictions(path, pixel_coords)
    out = []
    for iid in sorted(preds):
        pvs = preds[iid]
        layers = {pv.layer for pv in pvs if pv.layer is not None}
        want = layer if layer is not None else (max(layers) if layers else None)
        keep = [pv.instance for pv in pvs if pv.layer is None or pv.layer == want]
        out.append(Scene(iid, sizes[iid], keep))
    return out, preds


# -- subcommands ------------------------------------------------------------

def cmd_gen(a, rc):
    p = GenParams(seed=a.seed, n_scenes=a.count, instances_per_scene=(a.min_instances, a.max_instances),
                  class_mix=tuple(a.class_mix), raster_size=a.raster_size)
    rc.seed = a.seed
    rc.options = asdict(p)
    _log_rc(rc)
    scenes = generate_scenes(p)
    save_scenes(scenes, a.out)
    _write_json({"scenes": len(scenes), "instances": sum(len(s.instances) for s in scenes), "out": a.out}, None)


def cmd_rasterize(a, rc):
    rc.options = {"stroke_px": a.stroke_px}
    _log_rc(rc)
    scenes = load_scenes(a.scenes, a.pixel_coords)
    arrays = {f"image_{s.image_id}": rasterize(s, a.stroke_px) for s in scenes}
    tmp = Path(a.out).with_name(Path(a.out).name + ".tmp.npz")
    np.savez_compressed(tmp, **arrays)
    tmp.replace(a.out)
    _write_json({"images": len(arrays), "out": a.out}, None)


def _infer_one(job):
    iid, img, cfg, params, feature_seed, aux = job
    F = build_pyramid(img, cfg, feature_seed)
    layers = decode(encode(F, params, cfg), F, params, cfg)
    chosen = layers if aux else layers[-1:]
    out = []
    for pred in chosen:
        for pv in extract_predictions(pred, cfg):
            v = replace(pv.instance, id=pred.layer * cfg.n_queries + pv.instance.id)
            out.append(replace(pv, instance=v))
    return iid, out


def cmd_infer(a, rc):
    cfg = _config(a)
    rc.config = _cfg_dict(cfg)
    rc.seed = None if a.params else a.seed
    rc.options = {"feature_seed": a.feature_seed, "aux": a.aux, "jobs": a.jobs}
    _log_rc(rc)
    if a.rasters:
        with np.load(a.rasters) as z:
            images = [(int(k.split("_", 1)[1]), z[k]) for k in z.files]
    else:
        images = [(s.image_id, rasterize(s)) for s in load_scenes(a.scenes, a.pixel_coords)]
    images.sort(key=lambda t: t[0])
    for iid, img in images:
        if img.ndim != 2 or img.shape[0] != img.shape[1]:
            raise SceneFormatError(f"image {iid}: raster must be square")
    params = load_params(a.params, cfg) if a.params else init_params(cfg, a.seed)
    results = _map(_infer_one, [(iid, img, cfg, params, a.feature_seed, a.aux) for iid, img in images], a.jobs)
    preds = dict(results)
    save_predictions(preds, {iid: img.shape[0] for iid, img in images}, a.out)
    _write_json({"images": len(preds), "instances": sum(map(len, preds.values())), "out": a.out}, None)


def _dense(pv: PredictedVector, M: int, num_classes: int):
    """Dense (M, 2) points, (M,) key-point probabilities and class probabilities."""
    if pv.dense_points is not None and len(pv.dense_points) == M:
        pts, kp = np.asarray(pv.dense_points), np.asarray(pv.keypoint_prob)
    else:
        s = resample_uniform(pv.instance, M)
        pts, kp = s.points, s.key_flags.astype(float)
    if pv.class_probs is not None and len(pv.class_probs) == num_classes + 1:
        cp = np.asarray(pv.class_probs)
    else:
        cp = np.zeros(num_classes + 1)
        cp[pv.instance.class_id] = pv.instance.score
        cp[-1] = 1.0 - pv.instance.score
    return pts, kp, cp


class _Dense:
    def __init__(self, points, class_probs):
        self.points, self.class_probs = points, class_probs


def _match_image(pvs, gt: Scene, cfg, w, a, with_losses):
    M = cfg.n_points
    usable = []
    skipped = []
    for gi, g in enumerate(gt.instances):
        if len(g.points) > M:
            skipped.append(g.id)
            log.warning("image %s: gt %s has %d key points > n_points=%d, skipped", gt.image_id, g.id, len(g.points), M)
        else:
            usable.append(gi)
    dense = [_dense(pv, M, cfg.num_classes) for pv in pvs]
    pts = np.array([d[0] for d in dense]).reshape(len(dense), M, 2)
    cps = np.array([d[2] for d in dense]).reshape(len(dense), cfg.num_classes + 1)
    gts = [gt.instances[i] for i in usable]
    pairs, cost, _ = instance_match(_Dense(pts, cps), gts, a.lambda_cls, a.lambda_pts)
    rec = {"image_id": gt.image_id, "pairs": [], "cost": cost, "orientation": [], "point_cost": [],
           "assignment": [], "skipped_gt": skipped}
    totals = {"dir": [], "kp": [], "cls": [], "total": []}
    for pj, gk in sorted(pairs, key=lambda t: t[1]):
        g = gts[gk]
        prob = MatchProblem(pts[pj], dense[pj][1], canonical_points(g), g.kind)
        m = point_match(prob, w.match_point, w.match_prob, a.match_mode)
        rec["pairs"].append([usable[gk], pj])
        rec["orientation"].append(m.orientation)
        rec["point_cost"].append(m.cost)
        rec["assignment"].append(m.assignment.tolist())
        if with_losses:
            res = loss_vsl(prob, w, a.match_mode, match=m)
            for k in totals:
                totals[k].append(res.components[k])
    if with_losses:
        rec["losses"] = {k: (float(np.mean(v)) if v else 0.0) for k, v in totals.items()}
    return rec, totals


def _cmd_match_or_loss(a, rc, with_losses):
    cfg = _config(a)
    w = _weights(a)
    rc.config = _cfg_dict(cfg)
    rc.loss_weights = asdict(w)
    rc.options = {"match_mode": a.match_mode, "lambda_cls": a.lambda_cls, "lambda_pts": a.lambda_pts}
    _log_rc(rc)
    gts = load_scenes(a.gt, a.pixel_coords)
    _, preds = _pred_scenes(a.pred, a.pixel_coords)
    images, all_totals = [], {"dir": [], "kp": [], "cls": [], "total": []}
    for gt in gts:
        pvs = preds.get(gt.image_id, [])
        layers = [pv.layer for pv in pvs if pv.layer is not None]
        if layers:
            pvs = [pv for pv in pvs if pv.layer == max(layers)]
        rec, totals = _match_image(pvs, gt, cfg, w, a, with_losses)
        images.append(rec)
        for k in all_totals:
            all_totals[k].extend(totals[k])
    doc = {"images": images, "pairs": sum(len(r["pairs"]) for r in images),
           "cost": float(sum(r["cost"] for r in images))}
    if with_losses:
        doc["losses"] = {k: (float(np.mean(v)) if v else 0.0) for k, v in all_totals.items()}
        if not all(np.isfinite(v) for v in doc["losses"].values()):
            raise ValueError("non-finite loss")
    _write_json(doc, a.out)


def _fit_one(job):
    v, M, w, steps, lr, jitter, seed, mode = job
    rng = np.random.default_rng([seed, v.id])
    s = resample_uniform(v, M)
    init = np.clip(s.points + rng.normal(0.0, jitter, s.points.shape), 0.0, 1.0)
    prob = rng.uniform(0.2, 0.8, M)
    G = canonical_points(v)
    res = descent_fit(init, prob, G, v.kind, w, steps, lr, mode)
    rec = {"id": v.id, "structure": v.kind.value, "initial_loss": res.losses[0], "final_loss": res.losses[-1],
           "orientation": res.match.orientation,
           "keypoint_l1": float(np.abs(res.match.matched_points - res.match.gt_points).sum(-1).mean())}
    if v.kind is StructureKind.POLYGON:
        try:
            rec["polis"] = polis(res.match.matched_points, res.match.gt_points)
        except ValueError:
            rec["polis"] = None
    rec["finite"] = bool(np.all(np.isfinite(res.losses)))
    return rec


def cmd_fit(a, rc):
    cfg = _config(a)
    w = _weights(a)
    rc.config = _cfg_dict(cfg)
    rc.loss_weights = asdict(w)
    rc.seed = a.seed
    rc.options = {"steps": a.steps, "lr": a.lr, "jitter": a.jitter, "limit": a.limit, "match_mode": a.match_mode}
    _log_rc(rc)
    insts = []
    for s in load_scenes(a.gt, a.pixel_coords):
        for v in s.instances:
            if len(v.points) > cfg.n_points:
                log.warning("gt %s has %d key points > n_points=%d, skipped", v.id, len(v.points), cfg.n_points)
                continue
            insts.append(v)
    insts = insts[: a.limit] if a.limit is not None else insts
    recs = _map(_fit_one, [(v, cfg.n_points, w, a.steps, a.lr, a.jitter, a.seed, a.match_mode) for v in insts], a.jobs)
    _write_json({"instances": recs}, a.out)


def cmd_eval(a, rc):
    if a.describe:
        sys.stdout.write(describe())
        return
    if not a.pred or not a.gt:
        raise UsageError("eval: --pred and --gt are required unless --describe is given")
    rc.seed = a.seed
    rc.options = {k: getattr(a, k) for k in ("tol_px", "stroke_px", "apls_samples", "snap_px", "sap_thresholds", "layer")}
    _log_rc(rc)
    gts = load_scenes(a.gt, a.pixel_coords)
    preds, _ = _pred_scenes(a.pred, a.pixel_coords, a.layer)
    rep = evaluate(preds, gts, tol_px=a.tol_px, apls_samples=a.apls_samples, seed=a.seed, snap_px=a.snap_px,
                   stroke_px=a.stroke_px, sap_thresholds=tuple(a.sap_thresholds))
    if a.csv:
        _atomic_write_text(a.csv, rep.to_csv())
    _write_json(rep.to_dict(), a.out)


def cmd_export(a, rc):
    rc.options = {"format": a.format}
    _log_rc(rc)
    scenes, _ = _pred_scenes(a.scenes, a.pixel_coords)
    files = export(scenes, a.format, a.out_dir)
    _write_json({"files": [str(f) for f in files]}, None)


def cmd_selftest(a, rc):
    from .selftest import format_table, run_selftest

    _log_rc(rc)
    rows = run_selftest()
    sys.stdout.write(format_table(rows) + "\n")
    return EXIT_OK if all(r[1] for r in rows) else EXIT_INVALID


COMMANDS = {
    "gen": cmd_gen,
    "rasterize": cmd_rasterize,
    "infer": cmd_infer,
    "match": lambda a, rc: _cmd_match_or_loss(a, rc, False),
    "loss": lambda a, rc: _cmd_match_or_loss(a, rc, True),
    "fit": cmd_fit,
    "eval": cmd_eval,
    "export": cmd_export,
    "selftest": cmd_selftest,
}


def _cfg_dict(cfg: Config) -> dict:
    d = asdict(cfg)
    d["class_table"] = {k: v.value for k, v in cfg.class_table.items()}
    return d


def _log_rc(rc: RunConfig):
    log.info("run config %s", rc.to_json())


def main(argv=None) -> int:
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(f"{exc}\n")
        return EXIT_INVALID
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if a.verbose else logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s", force=True)
    paths = {k: v for k, v in vars(a).items()
             if k in ("out", "scenes", "rasters", "params", "pred", "gt", "csv", "out_dir") and v}
    rc = RunConfig(a.command, paths)
    try:
        code = COMMANDS[a.command](a, rc)
    except (SceneFormatError, ParameterError, UsageError, ValueError, KeyError) as exc:
        log.error("%s", exc)
        return EXIT_INVALID
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_IO
    return EXIT_OK if code is None else code


if __name__ == "__main__":
    sys.exit(main())
