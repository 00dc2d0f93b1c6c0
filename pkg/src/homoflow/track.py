"""Per-video motion tracks: one optional four-point delta per frame index."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .homography import FrameGeometry, delta_from_list, delta_to_list


@dataclass
class MotionTrack:
    """Entry ``n`` is the motion from frame ``n`` to frame ``n + dn``; NaN rows mark missing estimates."""

    video_id: str
    dn: int
    deltas: np.ndarray
    fps: float = 25.0
    width: int = 0
    height: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dn < 1:
            raise ValueError("dn must be >= 1")
        self.deltas = np.asarray(self.deltas, dtype=np.float64).reshape(-1, 4, 2)

    @classmethod
    def from_entries(cls, video_id, dn, entries, **kw):
        deltas = np.full((len(entries), 4, 2), np.nan)
        for i, e in enumerate(entries):
            if e is not None:
                deltas[i] = np.asarray(e, dtype=np.float64).reshape(4, 2)
        return cls(video_id, dn, deltas, **kw)

    def __len__(self):
        return len(self.deltas)

    @property
    def present(self) -> np.ndarray:
        return np.all(np.isfinite(self.deltas), axis=(1, 2))

    @property
    def frame_count(self) -> int:
        return len(self.deltas) + self.dn

    @property
    def geometry(self) -> FrameGeometry:
        return FrameGeometry(self.width, self.height)

    def entry(self, n):
        if not self.present[n]:
            return None
        return self.deltas[n]

    def magnitudes(self) -> np.ndarray:
        """Mean corner displacement norm per entry; NaN where missing."""
        return np.sqrt((self.deltas ** 2).sum(axis=2)).mean(axis=1)

    def header(self) -> dict:
        h = {"video_id": self.video_id, "dn": self.dn, "fps": self.fps,
             "width": self.width, "height": self.height}
        if self.meta:
            h["meta"] = self.meta
        return h


def write_track(path, track: MotionTrack) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    present = track.present
    with open(path, "w") as fh:
        fh.write(json.dumps(track.header()) + "\n")
        for n in range(len(track)):
            duv = delta_to_list(track.deltas[n]) if present[n] else None
            fh.write(json.dumps({"n": n, "duv": duv}) + "\n")


def read_track(path) -> MotionTrack:
    with open(path) as fh:
        header = json.loads(fh.readline())
        records = [json.loads(line) for line in fh if line.strip()]
    deltas = np.full((len(records), 4, 2), np.nan)
    for rec in records:
        if rec["duv"] is not None:
            deltas[rec["n"]] = delta_from_list(rec["duv"])
    return MotionTrack(
        header["video_id"], int(header["dn"]), deltas,
        fps=float(header.get("fps", 25.0)),
        width=int(header.get("width", 0)), height=int(header.get("height", 0)),
        meta=header.get("meta", {}),
    )


def read_tracks(directory) -> list[MotionTrack]:
    paths = sorted(Path(directory).glob("*.jsonl"))
    return [read_track(p) for p in paths]
