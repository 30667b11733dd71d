"""Deterministic multi-scale feature pyramid standing in for a trained backbone.

Each level is built from six hand-made channels (intensity, horizontal and
vertical gradient, distance to the nearest lit pixel, x and y coordinate),
average-pooled to the level size and mixed to ``C`` channels by a fixed,
seeded linear map.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .geometry import Config

RAW_CHANNELS = ("intensity", "grad_x", "grad_y", "distance", "x", "y")


@dataclass(frozen=True)
class FeatureLevel:
    data: np.ndarray  # (H, W, C)
    factor: int

    @property
    def shape(self):
        return self.data.shape[:2]


@dataclass(frozen=True)
class FeaturePyramid:
    levels: tuple[FeatureLevel, ...]

    def __len__(self):
        return len(self.levels)

    @property
    def channels(self) -> int:
        return self.levels[0].data.shape[-1]


def raw_channels(img: np.ndarray) -> np.ndarray:
    """Stack the six raw channels of a square raster as (S, S, 6)."""
    img = np.asarray(img, dtype=float)
    S = img.shape[0]
    if img.ndim != 2 or img.shape[1] != S:
        raise ValueError("raster must be square and single-channel")
    gy, gx = np.gradient(img) if S > 1 else (np.zeros_like(img), np.zeros_like(img))
    lit = img > 0.5
    if lit.any():
        dist = np.minimum(ndimage.distance_transform_edt(~lit) / S, 1.0)
    else:
        dist = np.ones_like(img)
    coords = (np.arange(S) + 0.5) / S
    xs = np.broadcast_to(coords[None, :], (S, S))
    ys = np.broadcast_to(coords[:, None], (S, S))
    return np.stack([img, gx, gy, dist, xs, ys], axis=-1)


def avg_pool(x: np.ndarray, factor: int) -> np.ndarray:
    """Average-pool (S, S, c) by ``factor``; edge windows average what exists."""
    S = x.shape[0]
    n = -(-S // factor)
    pad = n * factor - S
    padded = np.pad(x, ((0, pad), (0, pad), (0, 0)))
    ones = np.pad(np.ones((S, S)), ((0, pad), (0, pad)))
    sums = padded.reshape(n, factor, n, factor, -1).sum(axis=(1, 3))
    counts = ones.reshape(n, factor, n, factor).sum(axis=(1, 3))
    return sums / counts[..., None]


def projection(seed: int, level: int, c_in: int, c_out: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xFEA7, level]))
    limit = np.sqrt(6.0 / (c_in + c_out))
    return rng.uniform(-limit, limit, size=(c_in, c_out))


def build_pyramid(img: np.ndarray, cfg: Config, seed: int = 0) -> FeaturePyramid:
    raw = raw_channels(img)
    levels = []
    for li, factor in enumerate(cfg.scales):
        pooled = avg_pool(raw, factor)
        W = projection(seed, li, raw.shape[-1], cfg.channels)
        data = np.einsum("hwc,cd->hwd", pooled, W)
        data.flags.writeable = False
        levels.append(FeatureLevel(data, factor))
    return FeaturePyramid(tuple(levels))


def bilinear_sample(level, xy) -> np.ndarray:
    """Bilinearly sample a level at normalized coordinates ``xy`` (..., 2).

    Normalized ``u`` maps to pixel ``u * W - 0.5`` so cell centers sit at
    ``(i + 0.5) / W``. Reads outside the grid are zero.
    """
    data = level.data if isinstance(level, FeatureLevel) else np.asarray(level)
    H, W, C = data.shape
    xy = np.asarray(xy, dtype=float)
    px = xy[..., 0] * W - 0.5
    py = xy[..., 1] * H - 0.5
    x0 = np.floor(px)
    y0 = np.floor(py)
    fx = px - x0
    fy = py - y0
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)
    out = np.zeros(xy.shape[:-1] + (C,))
    for dy, wy in ((0, 1.0 - fy), (1, fy)):
        for dx, wx in ((0, 1.0 - fx), (1, fx)):
            xi, yi = x0 + dx, y0 + dy
            ok = (xi >= 0) & (xi < W) & (yi >= 0) & (yi < H)
            w = np.where(ok, wx * wy, 0.0)
            vals = data[np.clip(yi, 0, H - 1), np.clip(xi, 0, W - 1)]
            out += w[..., None] * vals
    return out
