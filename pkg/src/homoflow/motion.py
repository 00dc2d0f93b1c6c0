"""Interpretable motion classes for four-point deltas and their dataset distribution.

Labels describe the forward content displacement: ``RIGHT`` means the image
content moves towards +x.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import EmptyTrack
from .homography import FrameGeometry


class MotionClass(str, Enum):
    UP = "up"
    DOWN = "down"
    LEFT = "left"
    RIGHT = "right"
    ZOOM_IN = "zoom_in"
    ZOOM_OUT = "zoom_out"
    ROTATE_LEFT = "rotate_left"
    ROTATE_RIGHT = "rotate_right"
    MIXED = "mixed"
    STATIC = "static"


CLASSES = list(MotionClass)
_CODE = {c: i for i, c in enumerate(CLASSES)}

MIRROR = {
    MotionClass.LEFT: MotionClass.RIGHT,
    MotionClass.RIGHT: MotionClass.LEFT,
    MotionClass.ROTATE_LEFT: MotionClass.ROTATE_RIGHT,
    MotionClass.ROTATE_RIGHT: MotionClass.ROTATE_LEFT,
}


def mirror_class(c: MotionClass) -> MotionClass:
    return MIRROR.get(c, c)


def mirror_delta(d) -> np.ndarray:
    """Horizontal flip of a delta: negate x and swap TL<->TR, BL<->BR."""
    d = np.asarray(d, dtype=np.float64)
    out = d[..., [1, 0, 3, 2], :].copy()
    out[..., 0] *= -1.0
    return out


def motion_magnitude(d) -> float | np.ndarray:
    """Mean Euclidean corner displacement; accepts ``(4, 2)`` or ``(k, 4, 2)``."""
    d = np.asarray(d, dtype=np.float64)
    m = np.sqrt((d ** 2).sum(axis=-1)).mean(axis=-1)
    return float(m) if m.ndim == 0 else m


def classify_many(deltas, sigma: float, geom: FrameGeometry) -> np.ndarray:
    """Vectorised :func:`classify`; returns indices into :data:`CLASSES`."""
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    d = np.asarray(deltas, dtype=np.float64).reshape(-1, 4, 2)
    x, y = d[..., 0], d[..., 1]
    out = np.full(len(d), _CODE[MotionClass.MIXED])

    radial = geom.corners - geom.center
    radial = radial / np.linalg.norm(radial, axis=1, keepdims=True)
    # counter-clockwise as seen on screen, image y pointing down
    tangent = np.stack([radial[:, 1], -radial[:, 0]], axis=1)
    rad = (d * radial).sum(axis=-1)
    tan = (d * tangent).sum(axis=-1)

    # later assignments take precedence, so go from lowest to highest priority
    ordered = [
        (MotionClass.ROTATE_RIGHT, np.all((-tan > 0) & (-tan > np.abs(rad)), axis=1)),
        (MotionClass.ROTATE_LEFT, np.all((tan > 0) & (tan > np.abs(rad)), axis=1)),
        (MotionClass.ZOOM_IN, np.all((-rad > 0) & (-rad > np.abs(tan)), axis=1)),
        (MotionClass.ZOOM_OUT, np.all((rad > 0) & (rad > np.abs(tan)), axis=1)),
        (MotionClass.DOWN, np.all((y > 0) & (y > np.abs(x)), axis=1)),
        (MotionClass.UP, np.all((y < 0) & (-y > np.abs(x)), axis=1)),
        (MotionClass.RIGHT, np.all((x > 0) & (x > np.abs(y)), axis=1)),
        (MotionClass.LEFT, np.all((x < 0) & (-x > np.abs(y)), axis=1)),
        (MotionClass.STATIC, motion_magnitude(d).reshape(-1) < sigma),
    ]
    for cls, hit in ordered:
        out[hit] = _CODE[cls]
    return out


def classify(d, sigma: float, geom: FrameGeometry) -> MotionClass:
    return CLASSES[int(classify_many(d, sigma, geom)[0])]


@dataclass
class MotionDistribution:
    counts: dict
    total: int
    sigma_used: float
    missing: int = 0

    def fractions(self) -> dict:
        return {c: (n / self.total if self.total else 0.0) for c, n in self.counts.items()}

    def to_json(self) -> dict:
        fr = self.fractions()
        return {
            "classes": {c.value: {"count": self.counts[c], "fraction": fr[c]} for c in CLASSES},
            "total": self.total,
            "missing": self.missing,
            "sigma_used": self.sigma_used,
        }


def distribution_from_codes(codes, sigma, missing=0) -> MotionDistribution:
    counts = np.bincount(np.asarray(codes, dtype=np.int64), minlength=len(CLASSES))
    return MotionDistribution({c: int(counts[i]) for i, c in enumerate(CLASSES)},
                              int(counts.sum()), float(sigma), int(missing))


def distribution(track, sigma: float, geom: FrameGeometry | None = None) -> MotionDistribution:
    """Class counts over the present entries of one track (or a list of tracks)."""
    tracks = track if isinstance(track, (list, tuple)) else [track]
    codes, missing, size = [], 0, 0
    for t in tracks:
        size += len(t)
        p = t.present
        missing += int((~p).sum())
        if p.any():
            codes.append(classify_many(t.deltas[p], sigma, geom or t.geometry))
    if size == 0:
        raise EmptyTrack("track has no entries")
    codes = np.concatenate(codes) if codes else np.zeros(0, dtype=np.int64)
    return distribution_from_codes(codes, sigma, missing)


def write_distribution(out_dir, dist: MotionDistribution, svg=True) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "distribution.json").write_text(json.dumps(dist.to_json(), indent=2))
    fr = dist.fractions()
    with open(out_dir / "distribution.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["class", "count", "fraction"])
        for c in CLASSES:
            w.writerow([c.value, dist.counts[c], f"{fr[c]:.6f}"])
    if svg:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(7, 3))
        ax.bar([c.value for c in CLASSES], [100 * fr[c] for c in CLASSES], color="tab:blue")
        ax.set_ylabel("fraction [%]")
        ax.tick_params(axis="x", rotation=45)
        fig.tight_layout()
        fig.savefig(out_dir / "distribution.svg")
        plt.close(fig)
