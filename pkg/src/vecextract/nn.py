"""Forward-only numpy layers shared by the encoder and decoder."""
from __future__ import annotations

import numpy as np

from .features import FeaturePyramid, bilinear_sample

REF_EPS = 1e-6
LN_EPS = 1e-5


def dense(x, w, b=None):
    x = np.asarray(x, dtype=float)
    y = (x.reshape(-1, x.shape[-1]) @ w).reshape(x.shape[:-1] + (w.shape[1],))
    if b is not None:
        y = y + b
    return y


def relu(x):
    return np.maximum(x, 0.0)


def sigmoid(x):
    x = np.asarray(x, dtype=float)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def inverse_sigmoid(x, eps=REF_EPS):
    x = np.clip(np.asarray(x, dtype=float), eps, 1.0 - eps)
    return np.log(x) - np.log1p(-x)


def sigmoid_shift(x, delta, eps=REF_EPS):
    """``sigmoid(inverse_sigmoid(x) + delta)`` with input and output clamped to [eps, 1 - eps].

    Written as ``x / (x + (1 - x) e^-delta)`` so that ``delta == 0`` returns
    the clamped input bit for bit.
    """
    x = np.clip(np.asarray(x, dtype=float), eps, 1.0 - eps)
    delta = np.asarray(delta, dtype=float)
    e = np.exp(-np.abs(delta))
    up = x / (x + (1.0 - x) * e)
    xe = x * e
    down = xe / (xe + (1.0 - x))
    return np.clip(np.where(delta >= 0, up, down), eps, 1.0 - eps)


def layer_norm(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + LN_EPS) * g + b


def softmax(x, axis=-1):
    z = np.exp(x - x.max(axis=axis, keepdims=True))
    return z / z.sum(axis=axis, keepdims=True)


def mlp(x, p, prefix):
    return dense(relu(dense(x, p[prefix + "w1"], p[prefix + "b1"])), p[prefix + "w2"], p[prefix + "b2"])


def attention(q_in, kv_in, p, prefix, heads, trace=None):
    """Multi-head scaled dot-product attention over axis -2.

    ``q_in`` is (..., Lq, C) and ``kv_in`` (..., Lk, C) with matching
    leading dimensions; each leading index attends independently.
    """
    q = dense(q_in, p[prefix + "wq"], p[prefix + "bq"])
    k = dense(kv_in, p[prefix + "wk"], p[prefix + "bk"])
    v = dense(kv_in, p[prefix + "wv"], p[prefix + "bv"])
    C = q.shape[-1]
    d = C // heads

    def split(t):
        return np.moveaxis(t.reshape(t.shape[:-1] + (heads, d)), -2, -3)

    q, k, v = split(q), split(k), split(v)
    w = softmax(q @ np.swapaxes(k, -1, -2) / np.sqrt(d), axis=-1)
    if trace is not None:
        trace.append(w)
    out = w @ v
    out = np.moveaxis(out, -3, -2)
    out = out.reshape(out.shape[:-2] + (C,))
    return dense(out, p[prefix + "wo"], p[prefix + "bo"])


def ln(x, p, prefix):
    return layer_norm(x, p[prefix + "g"], p[prefix + "b"])


def self_attn_block(x, p, prefix, heads, trace=None):
    h = ln(x, p, prefix + "ln.")
    return x + attention(h, h, p, prefix, heads, trace)


def cross_attn_block(xq, xkv, p, prefix, heads, trace=None):
    return xq + attention(ln(xq, p, prefix + "ln_q."), ln(xkv, p, prefix + "ln_kv."), p, prefix, heads, trace=trace)


def ffn_block(x, p, prefix):
    return x + mlp(ln(x, p, prefix + "ln."), p, prefix)


def deformable_sample(q_normed, refs, F: FeaturePyramid, p, prefix, E, trace=None):
    """Sample ``E`` points around each reference and blend them with softmax weights.

    Offsets and weight logits are linear projections of the query. Sampling
    point ``k`` reads pyramid level ``k % len(F)``. Returns the blended
    features (..., C), the softmax weights (..., E) and the sampling
    coordinates (..., E, 2).
    """
    lead = q_normed.shape[:-1]
    offsets = dense(q_normed, p[prefix + "w_off"], p[prefix + "b_off"]).reshape(lead + (E, 2))
    coords = refs[..., None, :] + offsets
    weights = softmax(dense(q_normed, p[prefix + "w_att"], p[prefix + "b_att"]), axis=-1)
    if trace is not None:
        trace.append(weights)
    C = F.channels
    samples = np.empty(lead + (E, C))
    nl = len(F)
    for li, level in enumerate(F.levels):
        idx = np.arange(li, E, nl)
        if idx.size:
            samples[..., idx, :] = bilinear_sample(level, coords[..., idx, :])
    blended = (weights[..., None, :] @ samples)[..., 0, :]
    return blended, weights, coords
