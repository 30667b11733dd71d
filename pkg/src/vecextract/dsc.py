"""Point-level matching of predicted to ground-truth vectors, and the shape losses.

For one predicted vector (``M`` points with key-point probabilities) and one
ground-truth vector (``T`` key points, all labelled key) the matcher picks
the ``assignment`` a (ground-truth index -> prediction index) minimizing

    (1/T) * sum_i  match_point * |gt[i] - pred[a[i]]|_1 + match_prob * |1 - prob[a[i]]|

Open shapes are matched in both directions and the cheaper one wins. The
shape loss on the matched pair is

    direction * L_dir + keypoint * L_kp + classification * L_cls

with ``L_dir`` the mean of ``1 - cos`` between matched edges, ``L_kp`` the
mean l1 point error and ``L_cls`` the mean binary cross-entropy of the key
point probabilities against the matched set. Gradients are analytic and
treat the alignment as fixed.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .align import injective_assign, monotone_assign
from .geometry import StructureKind, VectorInstance
from .sampling import canonical_points, orientation_candidates

PROB_CLAMP = 1e-7
_TINY = 1e-12


@dataclass(frozen=True)
class LossWeights:
    match_point: float = 1.0
    match_prob: float = 1.0
    direction: float = 0.1
    keypoint: float = 1.0
    classification: float = 1.0

    def __post_init__(self):
        for name, val in vars(self).items():
            if val < 0:
                raise ValueError(f"{name} must be >= 0")

    def scaled(self, k: float) -> "LossWeights":
        return LossWeights(*(k * v for v in vars(self).values()))


@dataclass(frozen=True)
class MatchProblem:
    pred_points: np.ndarray   # (M, 2)
    pred_prob: np.ndarray     # (M,)
    gt_points: np.ndarray     # (T, 2) canonical order
    kind: StructureKind

    def __post_init__(self):
        P = np.asarray(self.pred_points, dtype=float).reshape(-1, 2)
        c = np.asarray(self.pred_prob, dtype=float).reshape(-1)
        G = np.asarray(self.gt_points, dtype=float).reshape(-1, 2)
        object.__setattr__(self, "pred_points", P)
        object.__setattr__(self, "pred_prob", c)
        object.__setattr__(self, "gt_points", G)
        object.__setattr__(self, "kind", StructureKind(self.kind))
        if len(P) != len(c):
            raise ValueError("pred_points and pred_prob lengths differ")
        if len(G) > len(P):
            raise ValueError(f"T={len(G)} exceeds M={len(P)}")

    @classmethod
    def from_instance(cls, pred_points, pred_prob, gt: VectorInstance) -> "MatchProblem":
        return cls(pred_points, pred_prob, canonical_points(gt), gt.kind)


@dataclass(frozen=True)
class MatchResult:
    assignment: np.ndarray          # (T,) prediction index for every gt key point
    cost: float
    orientation: str          # "forward" or "reversed"
    gt_points: np.ndarray     # (T, 2) gt key points in the chosen orientation
    matched_points: np.ndarray  # (T, 2) predicted key-point sequence
    alternatives: dict = field(default_factory=dict)


def cost_matrix(pred_points, pred_prob, gt_points, match_point=1.0, match_prob=1.0) -> np.ndarray:
    d = np.abs(gt_points[:, None, :] - pred_points[None, :, :])
    return match_point * (d[..., 0] + d[..., 1]) + match_prob * np.abs(1.0 - pred_prob)[None, :]


def alignment_cost(C: np.ndarray, assignment) -> float:
    total = 0.0
    for i, j in enumerate(assignment):
        total += float(C[i, j])
    return total / len(assignment)


def _solve(C, mode):
    if mode == "monotone":
        return monotone_assign(C)
    if mode == "hungarian":
        return injective_assign(C)
    raise ValueError(f"unknown matching mode {mode!r}")


def point_match(prob: MatchProblem, match_point: float = 1.0, match_prob: float = 1.0,
                mode: str = "monotone") -> MatchResult:
    candidates = [("forward", prob.gt_points)]
    if not prob.kind.closed:
        candidates.append(("reversed", prob.gt_points[::-1]))
    best = None
    costs = {}
    for name, G in candidates:
        C = cost_matrix(prob.pred_points, prob.pred_prob, G, match_point, match_prob)
        assignment = _solve(C, mode)
        cost = alignment_cost(C, assignment)
        costs[name] = cost
        if best is None or cost < best[1]:
            best = (name, cost, assignment, G)
    name, cost, assignment, G = best
    return MatchResult(assignment, cost, name, np.array(G), prob.pred_points[assignment], costs)


# -- losses -------------------------------------------------------------------

def _edges(P, closed):
    return (np.roll(P, -1, axis=0) - P) if closed else np.diff(P, axis=0)


def loss_dir(pred_k, gt, closed: bool, return_grad: bool = False):
    """Mean ``1 - cos`` between corresponding edges; zero-length edges score 1."""
    pred_k = np.asarray(pred_k, dtype=float)
    gt = np.asarray(gt, dtype=float)
    if len(pred_k) != len(gt):
        raise ValueError("sequence lengths differ")
    if len(gt) < 2:
        raise ValueError("direction loss needs at least 2 points")
    dh, d = _edges(pred_k, closed), _edges(gt, closed)
    nh = np.hypot(dh[:, 0], dh[:, 1])
    n = np.hypot(d[:, 0], d[:, 1])
    ok = (nh > _TINY) & (n > _TINY)
    safe_nh = np.where(ok, nh, 1.0)
    safe_n = np.where(ok, n, 1.0)
    cos = np.where(ok, np.sum(dh * d, axis=1) / (safe_nh * safe_n), 0.0)
    n_edges = len(d)
    value = float(np.sum(1.0 - cos) / n_edges)
    if not return_grad:
        return value
    g_edge = -(d / (safe_nh * safe_n)[:, None] - cos[:, None] * dh / (safe_nh ** 2)[:, None]) / n_edges
    g_edge[~ok] = 0.0
    grad = np.zeros_like(pred_k)
    m = len(g_edge)
    # edge i runs from point i to point (i + 1) % T
    nxt = (np.arange(m) + 1) % len(pred_k)
    np.add.at(grad, nxt, g_edge)
    np.add.at(grad, np.arange(m), -g_edge)
    return value, grad


def loss_kp(pred_k, gt, return_grad: bool = False):
    pred_k = np.asarray(pred_k, dtype=float)
    gt = np.asarray(gt, dtype=float)
    if pred_k.shape != gt.shape:
        raise ValueError("sequence lengths differ")
    T = len(gt)
    diff = pred_k - gt
    value = float(np.abs(diff).sum() / T)
    if not return_grad:
        return value
    return value, np.sign(diff) / T


def loss_cls(pred_prob, matched, return_grad: bool = False):
    """Mean binary cross-entropy of key-point probabilities against the matched set."""
    c_raw = np.asarray(pred_prob, dtype=float)
    M = len(c_raw)
    y = np.zeros(M)
    y[np.asarray(matched, dtype=int)] = 1.0
    c = np.clip(c_raw, PROB_CLAMP, 1.0 - PROB_CLAMP)
    bce = -(y * np.log(c) + (1.0 - y) * np.log1p(-c))
    value = float(bce.sum() / M)
    if not return_grad:
        return value
    inside = (c_raw > PROB_CLAMP) & (c_raw < 1.0 - PROB_CLAMP)
    grad = np.where(inside, (c - y) / (c * (1.0 - c)), 0.0) / M
    return value, grad


@dataclass(frozen=True)
class VSLResult:
    value: float
    grad_points: np.ndarray   # (M, 2)
    grad_prob: np.ndarray     # (M,)
    components: dict
    match: MatchResult


def loss_vsl(prob: MatchProblem, weights: LossWeights = LossWeights(), mode: str = "monotone",
             match: MatchResult | None = None) -> VSLResult:
    if match is None:
        match = point_match(prob, weights.match_point, weights.match_prob, mode)
    assignment = match.assignment
    G = match.gt_points
    Pk = prob.pred_points[assignment]
    l_dir, g_dir = loss_dir(Pk, G, prob.kind.closed, return_grad=True)
    l_kp, g_kp = loss_kp(Pk, G, return_grad=True)
    l_cls, g_cls = loss_cls(prob.pred_prob, assignment, return_grad=True)
    value = weights.direction * l_dir + weights.keypoint * l_kp + weights.classification * l_cls
    grad_points = np.zeros_like(prob.pred_points)
    np.add.at(grad_points, assignment, weights.direction * g_dir + weights.keypoint * g_kp)
    grad_prob = weights.classification * g_cls
    comps = {"dir": l_dir, "kp": l_kp, "cls": l_cls, "total": value}
    return VSLResult(value, grad_points, grad_prob, comps, match)


# -- instance level -----------------------------------------------------------

def instance_match(pred, gts, class_weight: float = 2.0, point_weight: float = 5.0):
    """Optimal one-to-one pairing of predicted instances with ground truth.

    ``pred`` needs ``class_probs`` (P, num_classes + 1) and ``points``
    (P, M, 2); ``gts`` is a Scene or a sequence of VectorInstance. The point
    term is the mean l1 distance between the predicted sequence and the
    better orientation of the uniformly resampled ground truth.

    Returns ``(pairs, total_cost, cost_matrix)`` with ``pairs`` a list of
    ``(pred_index, gt_index)``; unpaired predictions count as background.
    """
    gts = list(getattr(gts, "instances", gts))
    probs = np.asarray(pred.class_probs, dtype=float)
    points = np.asarray(pred.points, dtype=float)
    n_pred = len(points)
    if not gts or n_pred == 0:
        return [], 0.0, np.zeros((n_pred, len(gts)))
    M = points.shape[1]
    C = np.empty((n_pred, len(gts)))
    for i, g in enumerate(gts):
        cands = [c.points for c in orientation_candidates(g, M)]
        pt = np.min([np.abs(points - c[None]).sum(axis=-1).mean(axis=-1) for c in cands], axis=0)
        C[:, i] = class_weight * (1.0 - probs[:, g.class_id]) + point_weight * pt
    rows, cols = linear_sum_assignment(C)
    pairs = [(int(r), int(c)) for r, c in zip(rows, cols)]
    return pairs, float(C[rows, cols].sum()), C


# -- direct optimization ------------------------------------------------------

@dataclass(frozen=True)
class FitResult:
    points: np.ndarray
    prob: np.ndarray
    losses: list
    match: MatchResult


def descent_fit(init_points, init_prob, gt_points, kind, weights: LossWeights = LossWeights(),
                steps: int = 2000, lr: float = 0.05, mode: str = "monotone") -> FitResult:
    """Gradient descent on the shape loss, re-solving the alignment every step.

    Probabilities are projected back onto [0, 1] after each step.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    P = np.array(init_points, dtype=float)
    c = np.array(init_prob, dtype=float)
    G = np.asarray(gt_points, dtype=float)
    losses = []
    for _ in range(steps):
        res = loss_vsl(MatchProblem(P, c, G, kind), weights, mode)
        losses.append(res.value)
        P = P - lr * res.grad_points
        c = np.clip(c - lr * res.grad_prob, 0.0, 1.0)
    final = point_match(MatchProblem(P, c, G, kind), weights.match_point, weights.match_prob, mode)
    return FitResult(P, c, losses, final)
