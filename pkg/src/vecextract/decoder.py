"""Layered decoding of instance and point queries (forward pass only).

Each layer:

1. moves the point reference points in sigmoid space
   (from the instance reference on layer 0, from the previous point
   references afterwards);
2. samples ``E`` features around every instance and point reference and
   adds their softmax-weighted sum to the query (no value projection);
3. runs self-attention across instances and, separately, across the
   points of each instance;
4. runs cross-attention instance <- own points and points <- own instance,
   both computed from the same inputs;
5. predicts classes, boxes, points and key-point probabilities. The box
   center becomes the next instance reference.

``decode`` processes instances in an order derived from their content and
restores the caller's order at the end. BLAS may round a row differently
depending on its position in a batch; the content order makes
instance-permutation equivariance hold bit for bit.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .encoder import InstanceState
from .features import FeaturePyramid
from .geometry import Config, PredictedVector, VectorInstance, validate_instance
from .nn import (
    REF_EPS,
    cross_attn_block,
    deformable_sample,
    dense,
    ffn_block,
    ln,
    mlp,
    self_attn_block,
    sigmoid,
    sigmoid_shift,
    softmax,
)
from .params import ParameterSet


@dataclass(frozen=True)
class ReferenceState:
    instance_refs: np.ndarray   # (N, 2)
    point_refs: np.ndarray   # (N, M, 2)
    layer: int

    def permuted(self, perm) -> "ReferenceState":
        return ReferenceState(self.instance_refs[perm], self.point_refs[perm], self.layer)


@dataclass(frozen=True)
class SamplingPlan:
    offsets: np.ndarray  # (N, M+1, E, 2)
    coords: np.ndarray   # (N, M+1, E, 2)
    weights: np.ndarray  # (N, M+1, E)


@dataclass(frozen=True)
class Prediction:
    class_logits: np.ndarray   # (N, num_classes + 1), background last
    bbox: np.ndarray           # (N, 4) x_min, y_min, x_max, y_max
    points: np.ndarray         # (N, M, 2)
    keypoint_prob: np.ndarray  # (N, M)
    refs: ReferenceState
    layer: int

    @property
    def class_probs(self) -> np.ndarray:
        return softmax(self.class_logits, axis=-1)

    def permuted(self, perm) -> "Prediction":
        return Prediction(self.class_logits[perm], self.bbox[perm], self.points[perm],
                          self.keypoint_prob[perm], self.refs.permuted(perm), self.layer)


@dataclass
class Trace:
    """Collects softmax rows and reference points for invariant checks."""

    softmax_rows: list = field(default_factory=list)
    references: list = field(default_factory=list)
    plans: list = field(default_factory=list)

    def append(self, weights):
        self.softmax_rows.append(weights)


def update_geo_refs(layer: int, prev: np.ndarray, point_queries: np.ndarray, params: ParameterSet) -> np.ndarray:
    """Shift point references by an MLP of the point queries in sigmoid space.

    ``prev`` is the instance reference (N, 2) on layer 0 and the previous
    point references (N, M, 2) afterwards.
    """
    if layer == 0 and prev.ndim == 2:
        prev = np.broadcast_to(prev[:, None, :], point_queries.shape[:2] + (2,))
    return sigmoid_shift(prev, mlp(point_queries, params, f"dec.{layer}.geo_ref."))


def structured_deform_attn(instance_queries, point_queries, refs: ReferenceState, F: FeaturePyramid, params: ParameterSet,
                           cfg: Config, trace: Trace | None = None):
    pre = f"dec.{refs.layer}.deform."
    Q_s = np.concatenate([instance_queries[:, None, :], point_queries], axis=1)
    R_s = np.concatenate([refs.instance_refs[:, None, :], refs.point_refs], axis=1)
    h = ln(Q_s, params, pre + "ln.")
    blended, weights, coords = deformable_sample(h, R_s, F, params, pre, cfg.n_samples, trace)
    Q_s = Q_s + blended
    plan = SamplingPlan(coords - R_s[..., None, :], coords, weights)
    if trace is not None:
        trace.plans.append(plan)
    return Q_s[:, 0], Q_s[:, 1:], plan


def intra_level_interaction(instance_queries, point_queries, params: ParameterSet, cfg: Config, layer: int, trace=None):
    pre = f"dec.{layer}."
    q_ins = self_attn_block(instance_queries, params, pre + "ins_sa.", cfg.heads, trace=trace)
    q_ins = ffn_block(q_ins, params, pre + "ins_sa_ffn.")
    q_geo = self_attn_block(point_queries, params, pre + "geo_sa.", cfg.heads, trace=trace)
    q_geo = ffn_block(q_geo, params, pre + "geo_sa_ffn.")
    return q_ins, q_geo


def cross_level_interaction(instance_queries, point_queries, params: ParameterSet, cfg: Config, layer: int, trace=None):
    pre = f"dec.{layer}."
    ins_tok = instance_queries[:, None, :]
    q_ins = cross_attn_block(ins_tok, point_queries, params, pre + "ins_ca.", cfg.heads, trace)[:, 0]
    q_geo = cross_attn_block(point_queries, ins_tok, params, pre + "geo_ca.", cfg.heads, trace)
    q_ins = ffn_block(q_ins, params, pre + "ins_ca_ffn.")
    q_geo = ffn_block(q_geo, params, pre + "geo_ca_ffn.")
    return q_ins, q_geo


def predict_heads(instance_queries, point_queries, refs: ReferenceState, params: ParameterSet) -> tuple[Prediction, np.ndarray]:
    """Apply the prediction heads; also returns the next instance references."""
    p = params
    logits = dense(instance_queries, p["head.cls.w"], p["head.cls.b"])
    extent = refs.point_refs.max(axis=1) - refs.point_refs.min(axis=1)
    ref_box = np.concatenate([refs.instance_refs, np.clip(extent, REF_EPS, 1 - REF_EPS)], axis=-1)
    box = sigmoid_shift(ref_box, mlp(instance_queries, p, "head.box."))
    center, size = box[:, :2], box[:, 2:]
    bbox = np.clip(np.concatenate([center - size / 2, center + size / 2], axis=-1), 0.0, 1.0)
    points = sigmoid_shift(refs.point_refs, mlp(point_queries, p, "head.pts."))
    kp = sigmoid(dense(point_queries, p["head.kp.w"], p["head.kp.b"]))[..., 0]
    pred = Prediction(logits, bbox, points, kp, refs, refs.layer)
    return pred, center


def canonical_order(state: InstanceState) -> np.ndarray:
    """Instance order that depends only on instance content (stable on exact duplicates)."""
    rows = np.concatenate([state.instance_refs, state.instance_queries, state.point_queries.reshape(len(state.instance_queries), -1)], axis=1)
    rows = np.ascontiguousarray(rows)
    return np.array(sorted(range(len(rows)), key=lambda i: rows[i].tobytes()), dtype=int)


def decode(state: InstanceState, F: FeaturePyramid, params: ParameterSet, cfg: Config,
           trace: Trace | None = None) -> list[Prediction]:
    """Run the ``L`` decoder layers; returns one Prediction per layer.

    Trace entries are recorded in the internal (content) instance order.
    """
    order = canonical_order(state)
    inverse = np.argsort(order)
    preds = _decode(state.permuted(order), F, params, cfg, trace)
    return [p.permuted(inverse) for p in preds]


def _decode(state: InstanceState, F: FeaturePyramid, params: ParameterSet, cfg: Config,
            trace: Trace | None = None) -> list[Prediction]:
    instance_queries, point_queries, instance_refs = state.instance_queries, state.point_queries, state.instance_refs
    point_refs = None
    out = []
    for layer in range(cfg.n_layers):
        prev = instance_refs if layer == 0 else point_refs
        point_refs = update_geo_refs(layer, prev, point_queries, params)
        refs = ReferenceState(instance_refs, point_refs, layer)
        if trace is not None:
            trace.references.append(refs)
        instance_queries, point_queries, _ = structured_deform_attn(instance_queries, point_queries, refs, F, params, cfg, trace)
        instance_queries, point_queries = intra_level_interaction(instance_queries, point_queries, params, cfg, layer, trace)
        instance_queries, point_queries = cross_level_interaction(instance_queries, point_queries, params, cfg, layer, trace)
        pred, instance_refs = predict_heads(instance_queries, point_queries, refs, params)
        out.append(pred)
    return out


def _dedupe(pts, closed):
    keep = [pts[0]]
    for q in pts[1:]:
        if np.hypot(*(q - keep[-1])) > 1e-9:
            keep.append(q)
    if closed and len(keep) > 1 and np.hypot(*(keep[0] - keep[-1])) <= 1e-9:
        keep.pop()
    return np.array(keep)


def extract_predictions(pred: Prediction, cfg: Config) -> list[PredictedVector]:
    """Turn dense decoder output into concise vectors.

    An instance survives when its most likely class is not background and
    that probability reaches ``cfg.score_threshold``. Points with key-point
    probability >= ``cfg.keypoint_threshold`` are kept in sequence order; when too few
    survive for the structure, the most probable ones are used instead.
    """
    probs = pred.class_probs
    bg = probs.shape[1] - 1
    out = []
    for i in range(probs.shape[0]):
        cls = int(np.argmax(probs[i]))
        if cls == bg or probs[i, cls] < cfg.score_threshold:
            continue
        kind = cfg.class_table[cls]
        kp = pred.keypoint_prob[i]
        keep = np.flatnonzero(kp >= cfg.keypoint_threshold)
        want = None
        if kind.max_points is not None and len(keep) > kind.max_points:
            want = kind.max_points
        elif len(keep) < kind.min_points:
            want = kind.min_points
        if want is not None:
            keep = np.sort(np.argsort(-kp, kind="stable")[:want])
        pts = _dedupe(pred.points[i][keep], kind.closed)
        v = VectorInstance(kind, cls, pts, id=i, score=float(probs[i, cls]))
        if validate_instance(v, cfg):
            continue
        out.append(PredictedVector(v, pred.points[i].copy(), kp.copy(), probs[i].copy(), pred.layer))
    return out


def extract_vectors(pred: Prediction, cfg: Config) -> list[VectorInstance]:
    return [pv.instance for pv in extract_predictions(pred, cfg)]
