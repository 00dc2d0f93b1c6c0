import json

import numpy as np
import pytest

from homoflow import homography as hg
from homoflow import pipeline as pl
from homoflow.augmentation import GeometricKind, GeometricTransform, conjugate_motion
from homoflow.errors import EmptyDataset

G = hg.FrameGeometry(128, 96)
SMALL = {"data": {"videos": 3, "frames": 240}, "train": {"epochs": 2, "hidden_dims": [16]},
         "eval": {"overlays": 1}}


def _batch(seed=0, k=6):
    rng = np.random.default_rng(seed)
    x = rng.random((k, 3, 8, 8)).astype(np.float32)
    y = rng.normal(0, 3, (k, 1, 4, 2))
    return x, y


def test_photometric_only_leaves_targets():
    x, y = _batch()
    aug = pl.make_augmenter(G, 0, geometric=False, photometric=True)
    changed = False
    for epoch in range(4):
        xa, ya = aug(epoch, np.arange(len(x)), x, y)
        assert np.array_equal(ya, y)
        changed |= not np.array_equal(xa, x)
    assert changed


def test_geometric_augmenter_conjugates_and_is_deterministic():
    x, y = _batch(1)
    aug = pl.make_augmenter(G, 3, geometric=True, photometric=False)
    idx = np.arange(len(x))
    xa, ya = aug(0, idx, x, y)
    xb, yb = aug(0, idx, x, y)
    assert np.array_equal(xa, xb) and np.array_equal(ya, yb)
    seen = set()
    for e in range(10):
        xa, ya = aug(e, idx, x, y)
        for j in idx:
            for kind in GeometricKind:
                t = GeometricTransform(kind)
                if t.swaps_axes:
                    continue
                if np.array_equal(xa[j], np.stack([t.apply(f) for f in x[j]])):
                    assert np.allclose(ya[j, 0], conjugate_motion(y[j, 0], t, G), atol=1e-9)
                    seen.add(kind)
                    break
            else:
                pytest.fail("augmented stack is not a rigid transform of the input")
    # quarter turns never apply on non-square frames
    assert seen == {GeometricKind.IDENTITY, GeometricKind.FLIP_H, GeometricKind.FLIP_V, GeometricKind.ROTATE_180}


def test_config_validation():
    cfg = pl.validate_config({"train": {"epochs": 3}})
    assert cfg["train"]["epochs"] == 3 and cfg["train"]["batch_size"] == 64
    for bad in ({"bogus": 1}, {"split": {"test": 0.9, "val": 0.2}}, {"clips": {"n": 0}},
                {"track_source": "oracle"}, {"train": {"lambda": -1}}):
        with pytest.raises((ValueError, TypeError)):
            pl.validate_config(bad)
    assert len(pl.plan(cfg)) == 6


def test_labels_roundtrip(tmp_path):
    labels = {"a": ["static", "static", "right", "right", "static"], "b": ["up"]}
    pl.write_labels(tmp_path / "l.csv", labels)
    segs = pl.read_labels(tmp_path / "l.csv")
    assert [pl.label_at(segs["a"], i) for i in range(5)] == labels["a"]
    assert (tmp_path / "l.csv").read_text().count("\n") == 5


def test_split_videos():
    vids = [pl.Video(str(i), np.zeros((100, 2, 2)), None) for i in range(10)]
    tr, va, te = pl.split_videos(vids, 0.2, 0.1)
    assert [len(s) for s in (tr, va, te)] == [7, 1, 2]
    with pytest.raises(EmptyDataset):
        pl.split_videos(vids[:1], 0.2, 0.1)


def test_small_run_reproducible(tmp_path):
    a = pl.run_pipeline(SMALL, tmp_path / "a")
    b = pl.run_pipeline(dict(SMALL, threads=4), tmp_path / "b")
    assert a.report.content_hash() == b.report.content_hash()
    ja = json.loads((tmp_path / "a" / "report.json").read_text())
    assert ja["content_hash"] == a.report.content_hash()
    assert set(ja["methods"]) == {"predictor", "taylor_o1", "taylor_o2"}
    for name in ("model.json", "loss_log.csv", "clips_train.json", "clips_test.json", "summary.csv"):
        assert (tmp_path / "a" / name).is_file()
    assert len(list((tmp_path / "a" / "overlays").glob("*.png"))) == 2
    c = pl.run_pipeline(pl.merge_config(SMALL, {"train": {"seed": 1}}))
    assert c.report.content_hash() != a.report.content_hash()
