"""Structured-query encoding.

Instance queries are picked coarse-to-fine: the ``n_candidates``
best-scoring pyramid tokens pass through a two-layer refinement decoder and
the best ``n_queries`` after re-scoring are kept. Each kept instance query
is broadcast over ``n_points`` point slots with a learned embedding and the
point queries of one instance then attend to each other (never across
instances).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .features import FeaturePyramid
from .geometry import Config
from .nn import (
    deformable_sample,
    dense,
    ffn_block,
    ln,
    mlp,
    self_attn_block,
    sigmoid_shift,
)
from .params import ParameterSet


@dataclass(frozen=True)
class CoarseQueries:
    tokens: np.ndarray      # (K, C)
    locations: np.ndarray   # (K, 2) normalized token centers
    scores: np.ndarray      # (K,) non-increasing
    index: np.ndarray       # (K,) flat token index in (level, row, col) order


@dataclass(frozen=True)
class InstanceState:
    """Encoder output handed to the decoder.

    ``point_queries`` is (N, M, C); together with ``instance_queries``
    (N, C) it forms the structured query of every instance.
    """

    instance_queries: np.ndarray
    point_queries: np.ndarray
    instance_refs: np.ndarray
    coarse_scores: np.ndarray

    def permuted(self, perm) -> "InstanceState":
        perm = np.asarray(perm)
        return InstanceState(self.instance_queries[perm], self.point_queries[perm], self.instance_refs[perm], self.coarse_scores)


def flatten_tokens(F: FeaturePyramid):
    tokens, locs = [], []
    for level in F.levels:
        H, W, C = level.data.shape
        tokens.append(level.data.reshape(-1, C))
        cols, rows = np.meshgrid(np.arange(W), np.arange(H))
        locs.append(np.stack([(cols.ravel() + 0.5) / W, (rows.ravel() + 0.5) / H], axis=1))
    return np.concatenate(tokens), np.concatenate(locs)


def top_k(scores, k):
    """Indices of the ``k`` largest scores; ties keep the lower index first."""
    return np.argsort(-np.asarray(scores), kind="stable")[:k]


def select_coarse_queries(F: FeaturePyramid, params: ParameterSet, K: int) -> CoarseQueries:
    tokens, locs = flatten_tokens(F)
    if K > len(tokens):
        raise ValueError(f"{K} candidates requested but only {len(tokens)} tokens exist")
    scores = dense(tokens, params["enc.scorer.w"], params["enc.scorer.b"])[:, 0]
    idx = top_k(scores, K)
    return CoarseQueries(tokens[idx], locs[idx], scores[idx], idx)


def refine_instance_queries(coarse: CoarseQueries, F: FeaturePyramid, params: ParameterSet,
                            cfg: Config, n_keep: int | None = None, trace=None):
    """Two refinement layers over the coarse queries, then keep the best ``n_keep``.

    Returns ``(instance_queries, instance_refs, rescored)`` where ``rescored`` holds the new
    scores of all ``K`` coarse queries.
    """
    n_keep = cfg.n_queries if n_keep is None else n_keep
    if n_keep > len(coarse.tokens):
        raise ValueError(f"cannot keep {n_keep} of {len(coarse.tokens)} coarse queries")
    x = coarse.tokens
    p = params
    for r in range(2):
        pre = f"enc.refine.{r}."
        x = self_attn_block(x, p, pre + "sa.", cfg.heads, trace=trace)
        h = ln(x, p, pre + "deform.ln.")
        blended, _, _ = deformable_sample(h, coarse.locations, F, p, pre + "deform.", cfg.n_samples, trace)
        x = x + dense(dense(blended, p[pre + "deform.wv"], p[pre + "deform.bv"]),
                      p[pre + "deform.wo"], p[pre + "deform.bo"])
        x = ffn_block(x, p, pre + "ffn.")
    rescored = dense(x, p["enc.rescore.w"], p["enc.rescore.b"])[:, 0]
    keep = top_k(rescored, n_keep)
    instance_queries = x[keep]
    instance_refs = sigmoid_shift(coarse.locations[keep], mlp(instance_queries, p, "enc.ref."))
    return instance_queries, instance_refs, rescored


def init_geometric_queries(instance_queries: np.ndarray, V: np.ndarray) -> np.ndarray:
    return instance_queries[:, None, :] + V[None, :, :]


def shape_deformation(Q_geo_c: np.ndarray, params: ParameterSet, cfg: Config, trace=None) -> np.ndarray:
    """Per-instance self-attention over the point queries, residual plus feed-forward."""
    x = self_attn_block(Q_geo_c, params, "enc.shape.sa.", cfg.heads, trace=trace)
    return ffn_block(x, params, "enc.shape.ffn.")


def encode(F: FeaturePyramid, params: ParameterSet, cfg: Config, trace=None) -> InstanceState:
    coarse = select_coarse_queries(F, params, cfg.n_candidates)
    instance_queries, instance_refs, rescored = refine_instance_queries(coarse, F, params, cfg, trace=trace)
    point_queries = shape_deformation(init_geometric_queries(instance_queries, params["enc.embed_v"]), params, cfg, trace)
    return InstanceState(instance_queries, point_queries, instance_refs, rescored)
