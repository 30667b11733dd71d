"""Named, shape-checked parameter arrays for the encoder and decoder.

Parameters are never trained here; they come from a seeded initializer or
from a JSON file holding a manifest (name, shape) and a flat list of
decimal floats.
"""
from __future__ import annotations

import json
from collections.abc import Mapping
from types import MappingProxyType

import numpy as np

from .geometry import Config


class ParameterError(ValueError):
    pass


def _attn(prefix, C, cross=False):
    norms = ["ln_q.", "ln_kv."] if cross else ["ln."]
    out = []
    for n in norms:
        out += [(prefix + n + "g", (C,), "ones"), (prefix + n + "b", (C,), "zeros")]
    for m in ("q", "k", "v", "o"):
        out += [(prefix + "w" + m, (C, C), "glorot"), (prefix + "b" + m, (C,), "zeros")]
    return out


def _ffn(prefix, C, hidden):
    return [
        (prefix + "ln.g", (C,), "ones"), (prefix + "ln.b", (C,), "zeros"),
        (prefix + "w1", (C, hidden), "glorot"), (prefix + "b1", (hidden,), "zeros"),
        (prefix + "w2", (hidden, C), "glorot"), (prefix + "b2", (C,), "zeros"),
    ]


def _mlp(prefix, C, out, last="small"):
    return [
        (prefix + "w1", (C, C), "glorot"), (prefix + "b1", (C,), "zeros"),
        (prefix + "w2", (C, out), last), (prefix + "b2", (out,), "zeros"),
    ]


def _deform(prefix, C, E, value_proj):
    out = [
        (prefix + "ln.g", (C,), "ones"), (prefix + "ln.b", (C,), "zeros"),
        (prefix + "w_off", (C, 2 * E), "small"), (prefix + "b_off", (2 * E,), "offset_grid"),
        (prefix + "w_att", (C, E), "glorot"), (prefix + "b_att", (E,), "zeros"),
    ]
    if value_proj:
        out += [(prefix + "wv", (C, C), "glorot"), (prefix + "bv", (C,), "zeros"),
                (prefix + "wo", (C, C), "glorot"), (prefix + "bo", (C,), "zeros")]
    return out


def manifest(cfg: Config) -> list[tuple[str, tuple[int, ...], str]]:
    """(name, shape, initializer) for every array the model reads."""
    C, M, E = cfg.channels, cfg.n_points, cfg.n_samples
    hidden = cfg.ffn_mult * C
    m = [("enc.scorer.w", (C, 1), "glorot"), ("enc.scorer.b", (1,), "zeros")]
    for r in range(2):
        pre = f"enc.refine.{r}."
        m += _attn(pre + "sa.", C) + _deform(pre + "deform.", C, E, True) + _ffn(pre + "ffn.", C, hidden)
    m += [("enc.rescore.w", (C, 1), "glorot"), ("enc.rescore.b", (1,), "zeros")]
    m += _mlp("enc.ref.", C, 2)
    m += [("enc.embed_v", (M, C), "embed")]
    m += _attn("enc.shape.sa.", C) + _ffn("enc.shape.ffn.", C, hidden)
    for layer in range(cfg.n_layers):
        pre = f"dec.{layer}."
        m += _mlp(pre + "geo_ref.", C, 2)
        m += _deform(pre + "deform.", C, E, False)
        m += _attn(pre + "ins_sa.", C) + _ffn(pre + "ins_sa_ffn.", C, hidden)
        m += _attn(pre + "geo_sa.", C) + _ffn(pre + "geo_sa_ffn.", C, hidden)
        m += _attn(pre + "ins_ca.", C, cross=True) + _ffn(pre + "ins_ca_ffn.", C, hidden)
        m += _attn(pre + "geo_ca.", C, cross=True) + _ffn(pre + "geo_ca_ffn.", C, hidden)
    m += [("head.cls.w", (C, cfg.num_classes + 1), "glorot"), ("head.cls.b", (cfg.num_classes + 1,), "zeros")]
    m += _mlp("head.box.", C, 4) + _mlp("head.pts.", C, 2)
    m += [("head.kp.w", (C, 1), "glorot"), ("head.kp.b", (1,), "zeros")]
    return m


def _init_array(kind, shape, rng):
    if kind == "zeros":
        return np.zeros(shape)
    if kind == "ones":
        return np.ones(shape)
    if kind == "embed":
        return rng.normal(0.0, 1.0, size=shape)
    fan_in, fan_out = shape[0], shape[-1]
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    if kind == "glorot":
        return rng.uniform(-limit, limit, size=shape)
    if kind == "small":
        return rng.uniform(-limit, limit, size=shape) * 0.01
    if kind == "offset_grid":
        # sampling points on rings around the reference, radius in normalized units
        E = shape[0] // 2
        k = np.arange(E)
        ang = 2 * np.pi * k / E
        radius = 0.01 * (1 + k % 4)
        return np.stack([radius * np.cos(ang), radius * np.sin(ang)], axis=1).ravel()
    raise ParameterError(f"unknown initializer {kind!r}")


class ParameterSet(Mapping):
    """Read-only mapping name -> array, checked against :func:`manifest`."""

    def __init__(self, arrays: dict, cfg: Config, seed: int | None = None):
        expected = {name: shape for name, shape, _ in manifest(cfg)}
        missing = sorted(set(expected) - set(arrays))
        extra = sorted(set(arrays) - set(expected))
        if missing or extra:
            raise ParameterError(f"parameter names differ from manifest: missing={missing[:5]} extra={extra[:5]}")
        store = {}
        for name, shape in expected.items():
            a = np.array(arrays[name], dtype=float)
            if a.shape != tuple(shape):
                raise ParameterError(f"{name}: shape {a.shape} != {tuple(shape)}")
            if not np.all(np.isfinite(a)):
                raise ParameterError(f"{name}: non-finite values")
            a.flags.writeable = False
            store[name] = a
        self._arrays = MappingProxyType(store)
        self.cfg = cfg
        self.seed = seed

    def __getitem__(self, name):
        return self._arrays[name]

    def __iter__(self):
        return iter(self._arrays)

    def __len__(self):
        return len(self._arrays)

    def replace(self, updates: dict) -> "ParameterSet":
        merged = dict(self._arrays)
        merged.update(updates)
        return ParameterSet(merged, self.cfg, self.seed)


def init_params(cfg: Config, seed: int = 0) -> ParameterSet:
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x9A7A]))
    arrays = {name: _init_array(kind, shape, rng) for name, shape, kind in manifest(cfg)}
    return ParameterSet(arrays, cfg, seed)


def zero_params(cfg: Config) -> ParameterSet:
    return ParameterSet({name: np.zeros(shape) for name, shape, _ in manifest(cfg)}, cfg, None)


def save_params(params: ParameterSet, path) -> None:
    from .scene_io import _atomic_write_text

    names = [name for name, _, _ in manifest(params.cfg)]
    doc = {
        "seed": params.seed,
        "manifest": [{"name": n, "shape": list(params[n].shape)} for n in names],
        "values": [float(x) for n in names for x in params[n].ravel()],
    }
    _atomic_write_text(path, json.dumps(doc))


def load_params(path, cfg: Config) -> ParameterSet:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParameterError(f"malformed parameter file: {exc}") from exc
    flat = np.asarray(doc["values"], dtype=float)
    arrays, pos = {}, 0
    for entry in doc["manifest"]:
        shape = tuple(entry["shape"])
        size = int(np.prod(shape))
        if pos + size > flat.size:
            raise ParameterError("value store shorter than manifest")
        arrays[entry["name"]] = flat[pos:pos + size].reshape(shape)
        pos += size
    if pos != flat.size:
        raise ParameterError("value store longer than manifest")
    return ParameterSet(arrays, cfg, doc.get("seed"))
