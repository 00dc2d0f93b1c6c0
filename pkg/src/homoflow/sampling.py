"""Video database sampling: sigma, anchors, clip lattices and importance sampling.

A clip starting at frame ``s`` covers frames ``s, s + dn, ..., s + (N + M - 1) dn``.
Its first N frames form the recall horizon, the remaining M the preview
horizon. Importance sampling keeps only clips whose last recall frame is an
anchor, i.e. where significant motion starts.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyDataset, NoCandidates
from .track import MotionTrack


@dataclass(frozen=True)
class ClipSpec:
    n: int = 14
    m: int = 1
    dn: int = 5
    dc: int = 5

    def __post_init__(self):
        for name in ("n", "m", "dn", "dc"):
            if getattr(self, name) < 1:
                raise ValueError(f"clip spec {name} must be >= 1")

    @property
    def span(self) -> int:
        """Frame distance from the first to the last clip frame."""
        return (self.n + self.m - 1) * self.dn


@dataclass(frozen=True)
class Clip:
    video_id: str
    start: int
    spec: ClipSpec

    @property
    def frame_indices(self) -> list[int]:
        return [self.start + k * self.spec.dn for k in range(self.spec.n + self.spec.m)]

    @property
    def recall_frames(self) -> list[int]:
        return self.frame_indices[: self.spec.n]

    @property
    def preview_frames(self) -> list[int]:
        return self.frame_indices[self.spec.n:]

    @property
    def motion_indices(self) -> list[int]:
        return self.frame_indices[:-1]

    @property
    def recall_motion_indices(self) -> list[int]:
        return self.frame_indices[: self.spec.n - 1]

    @property
    def target_indices(self) -> list[int]:
        """Track entries the predictor must produce: recall end onwards."""
        return self.frame_indices[self.spec.n - 1: -1]

    @property
    def anchor(self) -> int:
        return self.start + (self.spec.n - 1) * self.spec.dn


def compute_sigma(tracks) -> float:
    """Population std of motion magnitudes over all present entries."""
    mags = [t.magnitudes()[t.present] for t in tracks]
    mags = np.concatenate(mags) if mags else np.zeros(0)
    if mags.size == 0:
        raise EmptyDataset("no present motion entries")
    return float(np.std(mags))


def anchors(track: MotionTrack, sigma: float) -> list[int]:
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    mags = track.magnitudes()
    hit = track.present & (np.nan_to_num(mags, nan=-1.0) > sigma)
    return [int(i) for i in np.nonzero(hit)[0]]


def valid_starts(frame_count: int, spec: ClipSpec) -> list[int]:
    last = frame_count - 1 - spec.span
    if last < 0:
        return []
    return list(range(0, last + 1, spec.dc))


def clip_complete(track: MotionTrack, start: int, spec: ClipSpec) -> bool:
    idx = start + spec.dn * np.arange(spec.n + spec.m - 1)
    if idx[-1] >= len(track):
        return False
    return bool(track.present[idx].all())


def candidate_starts(track: MotionTrack, sigma: float, spec: ClipSpec) -> list[int]:
    shift = (spec.n - 1) * spec.dn
    shifted = {a - shift for a in anchors(track, sigma)}
    starts = sorted(shifted.intersection(valid_starts(track.frame_count, spec)))
    return [s for s in starts if clip_complete(track, s, spec)]


def _draw(cands, count, seed):
    if count is None or count >= len(cands):
        return list(cands)
    rng = np.random.default_rng(seed)
    pick = np.sort(rng.choice(len(cands), size=count, replace=False))
    return [cands[i] for i in pick]


def importance_sample(track: MotionTrack, sigma: float, spec: ClipSpec, count: int | None,
                      seed: int = 0) -> list[Clip]:
    """Clips whose last recall frame is an anchor, drawn without replacement."""
    cands = [Clip(track.video_id, s, spec) for s in candidate_starts(track, sigma, spec)]
    if not cands:
        raise NoCandidates(f"no anchored clips in {track.video_id}")
    return _draw(cands, count, seed)


def importance_sample_dataset(tracks, sigma: float, spec: ClipSpec, count: int | None,
                              seed: int = 0) -> list[Clip]:
    """Same as :func:`importance_sample`, drawing from the union over all tracks."""
    cands = [Clip(t.video_id, s, spec) for t in tracks for s in candidate_starts(t, sigma, spec)]
    if not cands:
        raise NoCandidates("no anchored clips in dataset")
    return _draw(cands, count, seed)


def enumerate_clips(track: MotionTrack, spec: ClipSpec) -> list[Clip]:
    return [Clip(track.video_id, s, spec) for s in valid_starts(track.frame_count, spec)
            if clip_complete(track, s, spec)]


def write_clip_index(path, spec: ClipSpec, sigma: float, clips) -> None:
    data = {
        "spec": asdict(spec),
        "sigma": sigma,
        "clips": [{"video_id": c.video_id, "start": c.start} for c in clips],
    }
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(data, indent=1))


def read_clip_index(path):
    data = json.loads(Path(path).read_text())
    spec = ClipSpec(**data["spec"])
    clips = [Clip(c["video_id"], int(c["start"]), spec) for c in data["clips"]]
    return spec, float(data["sigma"]), clips
