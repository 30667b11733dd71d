import json
import subprocess
import sys

import numpy as np
import pytest

from vecextract.cli import main
from vecextract.scene_io import load_scenes

SMALL = ["--n-queries", "8", "--m-points", "12", "--channels", "16", "--e-samples", "4",
         "--layers", "2", "--k-coarse", "20", "--heads", "4"]


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["gen", "--seed", "4", "--count", "3", "--raster-size", "64", "--out", str(d / "gt.json")]) == 0
    return d


def test_gen_is_byte_identical(work):
    other = work / "again.json"
    assert main(["gen", "--seed", "4", "--count", "3", "--raster-size", "64", "--out", str(other)]) == 0
    assert other.read_bytes() == (work / "gt.json").read_bytes()
    assert len(load_scenes(other)) == 3


def test_pipeline(work, capsys):
    gt, ras, pred = work / "gt.json", work / "r.npz", work / "pred.json"
    assert main(["rasterize", "--scenes", str(gt), "--out", str(ras)]) == 0
    with np.load(ras) as z:
        assert sorted(z.files) == ["image_0", "image_1", "image_2"]
        assert z["image_0"].shape == (64, 64)
    assert main(["infer", "--rasters", str(ras), "--seed", "1", "--aux", "--out", str(pred)] + SMALL) == 0
    doc = json.loads(pred.read_text())
    assert doc  # schema checked by the loader below
    from vecextract.scene_io import load_predictions

    preds, sizes = load_predictions(pred)
    assert sorted(preds) == [0, 1, 2] and set(sizes.values()) == {64}
    for pvs in preds.values():
        for pv in pvs:
            assert pv.layer in (0, 1) and pv.dense_points.shape == (12, 2)

    out = work / "loss.json"
    assert main(["loss", "--pred", str(pred), "--gt", str(gt), "--out", str(out)] + SMALL) == 0
    res = json.loads(out.read_text())
    assert len(res["images"]) == 3
    for img in res["images"]:
        assert set(img) >= {"image_id", "pairs", "cost", "orientation", "assignment", "losses"}
        assert all(np.isfinite(v) for v in img["losses"].values())
    capsys.readouterr()
    assert main(["match", "--gt", str(gt), "--pred", str(gt)] + SMALL + ["--m-points", "40"]) == 0
    m = json.loads(capsys.readouterr().out)
    assert all("losses" not in img for img in m["images"])

    rep = work / "rep.json"
    assert main(["eval", "--pred", str(pred), "--gt", str(gt), "--out", str(rep), "--csv", str(work / "r.csv")]) == 0
    keys = json.loads(rep.read_text())
    assert {"map", "iou", "ciou", "polis", "precision", "recall", "f1", "apls", "sap10", "sf15"} <= set(keys)


def test_eval_self_and_describe(work, capsys):
    gt = str(work / "gt.json")
    assert main(["eval", "--pred", gt, "--gt", gt, "--apls-samples", "50"]) == 0
    r = json.loads(capsys.readouterr().out)
    assert (r["map"], r["iou"], r["ciou"], r["f1"], r["apls"]) == (1, 1, 1, 1, 1)
    assert abs(r["polis"]) <= 1e-9
    assert main(["eval", "--describe"]) == 0
    assert "PoLiS" in capsys.readouterr().out


def test_export(work):
    out = work / "svg"
    assert main(["export", "--scenes", str(work / "gt.json"), "--format", "svg", "--out-dir", str(out)]) == 0
    assert len(list(out.glob("*.svg"))) == 3


def test_exit_codes(work, tmp_path):
    assert main(["nonsense"]) == 1
    assert main(["gen", "--count", "2"]) == 1  # missing --out
    assert main(["eval", "--pred", str(tmp_path / "missing.json"), "--gt", str(work / "gt.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["eval", "--pred", str(bad), "--gt", str(bad)]) == 1
    assert main(["gen", "--min-instances", "5", "--max-instances", "2", "--out", str(tmp_path / "x.json")]) == 1


def test_selftest_and_module_entry():
    proc = subprocess.run([sys.executable, "-m", "vecextract", "selftest"], capture_output=True, text=True, timeout=300)
    assert proc.returncode == 0, proc.stdout + proc.stderr
    assert proc.stdout.count("PASS") == 6
