"""From a synthetic scene to predicted vectors and a metric report.

The model weights are random (there is no training here), so the numbers
only show that every stage runs and talks to the next one. Run::

    python3 demos/01_scene_to_vectors.py
"""
import numpy as np

from vecextract import Config
from vecextract.decoder import decode, extract_vectors
from vecextract.encoder import encode
from vecextract.features import build_pyramid
from vecextract.geometry import CLASS_NAMES, Scene
from vecextract.metrics import evaluate
from vecextract.params import init_params
from vecextract.scene_io import GenParams, generate_scenes, rasterize

cfg = Config()
scenes = generate_scenes(GenParams(seed=7, n_scenes=2))
params = init_params(cfg, seed=0)

predicted = []
for scene in scenes:
    image = rasterize(scene)
    print(f"image {scene.image_id}: {len(scene.instances)} instances, raster {image.shape}, "
          f"{int(image.sum())} lit pixels")

    F = build_pyramid(image, cfg, seed=0)
    print("  pyramid levels:", [lv.data.shape[:2] for lv in F.levels])

    state = encode(F, params, cfg)
    print(f"  encoder kept {len(state.instance_queries)} of {cfg.n_candidates} coarse tokens; "
          f"first reference point {np.round(state.instance_refs[0], 3)}")

    layers = decode(state, F, params, cfg)
    last = layers[-1]
    vecs = extract_vectors(last, cfg)
    kinds = {}
    for v in vecs:
        kinds[CLASS_NAMES[v.class_id]] = kinds.get(CLASS_NAMES[v.class_id], 0) + 1
    print(f"  decoder ran {len(layers)} layers; {len(vecs)} vectors survive extraction: {kinds}")
    predicted.append(Scene(scene.image_id, scene.raster_size, vecs))

report = evaluate(predicted, scenes, apls_samples=50)
print("\nrandom weights vs ground truth:")
print(" ", {k: (round(v, 3) if isinstance(v, float) else v) for k, v in report.to_dict().items()
            if k in ("map", "iou", "f1", "apls")})
print("ground truth vs itself:")
print(" ", {k: v for k, v in evaluate(scenes, scenes, apls_samples=50).to_dict().items()
            if k in ("map", "iou", "f1", "apls")})
