import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from homoflow.errors import EmptyDataset, NoCandidates
from homoflow.sampling import (Clip, ClipSpec, anchors, candidate_starts, clip_complete, compute_sigma,
                               enumerate_clips, importance_sample, importance_sample_dataset, read_clip_index,
                               valid_starts, write_clip_index)
from homoflow.track import MotionTrack, read_track, read_tracks, write_track


def track_from_mags(mags, dn=1, vid="v"):
    mags = np.asarray(mags, dtype=float)
    d = np.zeros((len(mags), 4, 2))
    d[:, :, 0] = mags[:, None]
    d[np.isnan(mags)] = np.nan
    return MotionTrack(vid, dn, d, width=32, height=24)


def random_track(seed, length=300, dn=5, p_move=0.3, p_missing=0.02):
    rng = np.random.default_rng(seed)
    mags = np.where(rng.random(length) < p_move, rng.uniform(3, 10, length), rng.uniform(0, 0.5, length))
    mags[rng.random(length) < p_missing] = np.nan
    return track_from_mags(mags, dn, f"v{seed}")


def test_clip_spec_and_indices():
    spec = ClipSpec()
    assert (spec.n, spec.m, spec.dn, spec.dc) == (14, 1, 5, 5)
    assert spec.span == 70
    c = Clip("v", 10, spec)
    assert c.frame_indices == list(range(10, 85, 5))
    assert c.recall_frames[-1] == c.anchor == 75
    assert c.preview_frames == [80]
    assert c.target_indices == [75]
    assert c.recall_motion_indices == list(range(10, 75, 5))
    with pytest.raises(ValueError):
        ClipSpec(n=0)


def test_sigma():
    assert compute_sigma([track_from_mags([2, 2, 2])]) == 0
    assert compute_sigma([track_from_mags([0, 2]), track_from_mags([0, 2, np.nan])]) == 1.0
    with pytest.raises(EmptyDataset):
        compute_sigma([track_from_mags([np.nan])])


def test_sigma_two_pass_oracle():
    tracks = [random_track(s) for s in range(5)]
    vals = [v for t in tracks for v in t.magnitudes() if not np.isnan(v)]
    mean = sum(vals) / len(vals)
    var = sum((v - mean) ** 2 for v in vals) / len(vals)
    assert compute_sigma(tracks) == pytest.approx(var ** 0.5, abs=1e-12)


def test_anchors():
    assert anchors(track_from_mags(np.zeros(10)), 1.0) == []
    assert anchors(track_from_mags([0, 0, 5, 0, 5]), 1.0) == [2, 4]
    t = random_track(3)
    m = t.magnitudes()
    assert anchors(t, 2.0) == [i for i in range(len(t)) if not np.isnan(m[i]) and m[i] > 2.0]


def test_valid_starts():
    assert valid_starts(80, ClipSpec()) == [0, 5]
    assert valid_starts(70, ClipSpec()) == []
    assert valid_starts(4, ClipSpec(2, 1, 1, 1)) == [0, 1]


def test_single_anchor_candidate():
    spec = ClipSpec()
    mags = np.zeros(200)
    mags[(spec.n - 1) * spec.dn] = 5.0
    t = track_from_mags(mags, spec.dn)
    clips = importance_sample(t, 1.0, spec, None)
    assert [c.start for c in clips] == [0]
    with pytest.raises(NoCandidates):
        importance_sample(track_from_mags(np.zeros(200), 5), 1.0, spec, None)


def brute_candidates(t, sigma, spec):
    """Every start whose last recall frame carries significant motion, by exhaustive scan."""
    out = []
    mags = t.magnitudes()
    for s in range(t.frame_count):
        if s % spec.dc:
            continue
        frames = [s + k * spec.dn for k in range(spec.n + spec.m)]
        if frames[-1] > t.frame_count - 1:
            continue
        motions = frames[:-1]
        if any(np.isnan(mags[i]) for i in motions):
            continue
        if mags[frames[spec.n - 1]] > sigma:
            out.append(s)
    return out


@pytest.mark.parametrize("seed", range(5))
def test_candidates_equal_brute_force(seed):
    t = random_track(seed)
    spec = ClipSpec()
    sigma = compute_sigma([t])
    assert candidate_starts(t, sigma, spec) == brute_candidates(t, sigma, spec)


def test_sampling_determinism_and_subset():
    t = random_track(7, 2000)
    spec = ClipSpec()
    sigma = compute_sigma([t])
    a = importance_sample(t, sigma, spec, 10, seed=1)
    b = importance_sample(t, sigma, spec, 10, seed=1)
    c = importance_sample(t, sigma, spec, 10, seed=2)
    cands = set(candidate_starts(t, sigma, spec))
    assert a == b and len(a) == 10 and len({x.start for x in a}) == 10
    assert {x.start for x in c} <= cands
    allc = importance_sample(t, sigma, spec, 10 ** 6)
    assert {x.start for x in allc} == cands
    mags = t.magnitudes()
    for clip in allc:
        assert mags[clip.anchor] > sigma
        assert clip_complete(t, clip.start, spec)


def test_dataset_sampling_union():
    tracks = [random_track(s, 500) for s in range(3)]
    spec = ClipSpec()
    sigma = compute_sigma(tracks)
    clips = importance_sample_dataset(tracks, sigma, spec, None)
    assert len(clips) == sum(len(candidate_starts(t, sigma, spec)) for t in tracks)


def test_enumerate_clips():
    spec = ClipSpec(2, 1, 1, 1)
    t = track_from_mags([1, 1, 1, 1, 1])
    assert [c.start for c in enumerate_clips(t, spec)] == [0, 1, 2, 3]
    t = track_from_mags([1, 1, np.nan, 1, 1])
    assert [c.start for c in enumerate_clips(t, spec)] == [0, 3]
    t = random_track(4)
    spec = ClipSpec()
    expected = [s for s in valid_starts(t.frame_count, spec)
                if not np.isnan(t.magnitudes()[[s + k * spec.dn for k in range(spec.n + spec.m - 1)]]).any()]
    assert [c.start for c in enumerate_clips(t, spec)] == expected


@given(st.integers(0, 10 ** 6), st.integers(1, 4), st.integers(1, 3), st.integers(1, 3), st.integers(1, 4))
def test_every_candidate_anchored(seed, n, m, dn, dc):
    t = random_track(seed, 120, dn)
    spec = ClipSpec(n, m, dn, dc)
    sigma = 2.0
    for s in candidate_starts(t, sigma, spec):
        clip = Clip(t.video_id, s, spec)
        assert t.magnitudes()[clip.anchor] > sigma
        assert clip.frame_indices[-1] <= t.frame_count - 1
    assert candidate_starts(t, sigma, spec) == brute_candidates(t, sigma, spec)


def test_track_and_clip_files(tmp_path):
    t = random_track(1, 50)
    write_track(tmp_path / "tracks" / "v1.jsonl", t)
    back = read_track(tmp_path / "tracks" / "v1.jsonl")
    assert back.video_id == t.video_id and back.dn == t.dn
    assert np.array_equal(back.deltas, t.deltas, equal_nan=True)
    lines = (tmp_path / "tracks" / "v1.jsonl").read_text().splitlines()
    header = json.loads(lines[0])
    assert {"video_id", "dn", "fps", "width", "height"} <= set(header)
    assert len(lines) == 51
    missing = [json.loads(x) for x in lines[1:] if json.loads(x)["duv"] is None]
    assert len(missing) == int((~t.present).sum())
    assert len(read_tracks(tmp_path / "tracks")) == 1
    spec = ClipSpec(2, 1, 5, 5)
    clips = [Clip("v1", 0, spec), Clip("v1", 5, spec)]
    write_clip_index(tmp_path / "clips.json", spec, 1.5, clips)
    assert read_clip_index(tmp_path / "clips.json") == (spec, 1.5, clips)
