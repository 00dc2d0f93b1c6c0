import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from homoflow.cli import main
from homoflow.frames import write_frames
from homoflow.track import read_track


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert main(["synth", "gen", "--kind", "random_projective", "--frames", "12", "--dn", "1",
                 "--width", "160", "--height", "120", "--seed", "2", "--out", str(out)]) == 0
    return out


@pytest.fixture(scope="module")
def cue_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("cue")
    assert main(["synth", "gen", "--kind", "cue", "--frames", "160", "--videos", "2",
                 "--seed", "1", "--out", str(out)]) == 0
    return out


def test_synth_layout_and_manifest(synth_dir):
    vid = "random_projective_2_000"
    assert len(list((synth_dir / "frames" / vid).glob("*.png"))) == 12
    assert (synth_dir / "tracks" / f"{vid}.jsonl").is_file()
    assert (synth_dir / "labels.csv").read_text().startswith("video_id,start_frame,label")
    m = json.loads((synth_dir / "manifest.json").read_text())
    for key in ("command", "config", "seeds", "inputs", "outputs", "tool_version", "wall_time_s", "content_hash"):
        assert key in m
    assert m["seeds"] == {"seed": 2}
    assert m["command"].startswith("homoflow synth gen")


def test_estimate_matches_truth(synth_dir, tmp_path):
    vid = "random_projective_2_000"
    out = tmp_path / "est.jsonl"
    assert main(["estimate", "--frames", str(synth_dir / "frames" / vid), "--dn", "1",
                 "--out", str(out)]) == 0
    est = read_track(out)
    truth = read_track(synth_dir / "tracks" / f"{vid}.jsonl")
    err = np.linalg.norm(est.deltas - truth.deltas, axis=-1).mean(axis=1)
    assert np.nanmax(err) <= 0.5
    m = json.loads((tmp_path / "est.manifest.json").read_text())
    assert m["inputs"]["frames"]["sha256"]
    assert m["missing_fraction"] == 0.0


def test_estimate_bad_inputs(tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    assert main(["estimate", "--frames", str(empty), "--out", str(tmp_path / "t.jsonl")]) == 2
    assert main(["estimate", "--frames", str(tmp_path / "nope"), "--out", str(tmp_path / "t.jsonl")]) == 2


def test_estimate_quality_gate(tmp_path):
    write_frames(tmp_path / "flat", [np.full((64, 80), 0.5)] * 4)
    out = tmp_path / "t.jsonl"
    assert main(["estimate", "--frames", str(tmp_path / "flat"), "--dn", "1", "--out", str(out)]) == 3
    assert out.is_file()


def test_classify_and_sample(cue_dir, tmp_path):
    assert main(["classify", "--tracks", str(cue_dir / "tracks"), "--out", str(tmp_path / "dist")]) == 0
    dist = json.loads((tmp_path / "dist" / "distribution.json").read_text())
    assert dist
    assert main(["sample", "--tracks", str(cue_dir / "tracks"), "--count", "20", "--out",
                 str(tmp_path / "clips.json")]) == 0
    assert main(["sample", "--tracks", str(cue_dir / "tracks"), "--dn", "3", "--out",
                 str(tmp_path / "bad.json")]) == 2
    assert main(["classify", "--tracks", str(tmp_path / "none"), "--out", str(tmp_path / "d2")]) == 2


def test_train_predict_eval(cue_dir, tmp_path):
    clips = tmp_path / "clips.json"
    assert main(["sample", "--tracks", str(cue_dir / "tracks"), "--all", "--out", str(clips)]) == 0
    cfg = tmp_path / "train.json"
    cfg.write_text(json.dumps({"epochs": 2, "batch_size": 8, "hidden_dims": [8]}))
    model = tmp_path / "model.json"
    args = ["--clips", str(clips), "--tracks", str(cue_dir / "tracks")]
    assert main(["train", *args, "--config", str(cfg), "--out", str(model)]) == 0
    assert (tmp_path / "model_loss.csv").is_file()
    assert main(["predict", *args, "--model", str(model), "--out", str(tmp_path / "p.jsonl")]) == 0
    rec = json.loads((tmp_path / "p.jsonl").read_text().splitlines()[0])
    assert {"predictor", "taylor_o1", "taylor_o2"} <= set(rec)
    ev = tmp_path / "eval"
    assert main(["eval", *args, "--model", str(model), "--labels", str(cue_dir / "labels.csv"),
                 "--overlays", "2", "--out", str(ev)]) == 0
    assert (ev / "report.json").is_file() and (ev / "manifest.json").is_file()
    assert len(list((ev / "overlays").glob("*.png"))) >= 2
    assert main(["predict", *args, "--model", str(tmp_path / "missing.json"), "--out", str(tmp_path / "q")]) == 2


def test_pipeline_dry_run_writes_nothing(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["pipeline", "--dry-run", "--set", "train.epochs=1", "--out", str(out)]) == 0
    assert not out.exists()
    text = capsys.readouterr().out
    assert "plan:" in text and '"epochs": 1' in text


def test_pipeline_bad_config(tmp_path):
    assert main(["pipeline", "--set", "train.epochs=0", "--out", str(tmp_path / "r")]) == 2
    assert main(["pipeline", "--set", "nonsense", "--out", str(tmp_path / "r")]) == 2
    assert main(["pipeline", "--set", "data.kind=\"disk\"", "--set", f"data.root=\"{tmp_path / 'no'}\"",
                 "--out", str(tmp_path / "r")]) == 2


def test_bench(tmp_path):
    out = tmp_path / "bench.csv"
    assert main(["bench", "--length", "3", "--repeats", "2", "--width", "128", "--height", "96",
                 "--out", str(out)]) == 0
    assert out.read_text().splitlines()[0].startswith("method,time_s")


def test_entry_point_usage_error():
    r = subprocess.run([sys.executable, "-m", "homoflow.cli", "frobnicate"], capture_output=True, text=True)
    assert r.returncode == 2
