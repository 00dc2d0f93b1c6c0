"""Metrics and reports: mean pairwise distance, image-center displacement
against direction labels, warp overlays and estimator timing."""
from __future__ import annotations

import csv
import hashlib
import json
import resource
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import homography as hg
from .errors import EmptySet, LabelMismatch
from .kernels import get_backend
from .motion import MotionClass

DIRECTIONAL = [MotionClass.LEFT, MotionClass.RIGHT, MotionClass.UP, MotionClass.DOWN]
DEAD_ZONE = 1e-3


# ---------------------------------------------------------------- metrics

def corner_errors(preds, targets) -> np.ndarray:
    """Per-sample mean corner-error norm over corners and preview steps."""
    p = np.asarray(preds, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch {p.shape} vs {t.shape}")
    if p.size == 0:
        raise EmptySet("no samples")
    p = p.reshape(len(p), -1, 4, 2)
    t = t.reshape(len(t), -1, 4, 2)
    return np.sqrt(((p - t) ** 2).sum(axis=-1)).mean(axis=(1, 2))


def mpd(preds, targets) -> tuple[float, float]:
    """Mean pairwise distance: mean and population std of per-sample errors."""
    e = corner_errors(preds, targets)
    return float(e.mean()), float(e.std())


def center_displacement(d, geom: hg.FrameGeometry) -> np.ndarray:
    """Motion of the frame center under the delta's homography, scaled to [-1, 1]."""
    c = geom.center
    g = hg.matrix_from_four_point(d, geom)
    return (hg.project_point(g, c) - c) / geom.half_extent


def dominant_direction(cd, dead_zone: float = DEAD_ZONE) -> MotionClass | None:
    x, y = float(cd[0]), float(cd[1])
    if max(abs(x), abs(y)) < dead_zone:
        return None
    if abs(x) >= abs(y):
        return MotionClass.RIGHT if x > 0 else MotionClass.LEFT
    return MotionClass.DOWN if y > 0 else MotionClass.UP


_NEGATED = {MotionClass.LEFT: MotionClass.RIGHT, MotionClass.RIGHT: MotionClass.LEFT,
            MotionClass.UP: MotionClass.DOWN, MotionClass.DOWN: MotionClass.UP}


def label_agreement(predictions, labels, geom: hg.FrameGeometry, dead_zone: float = DEAD_ZONE,
                    allow_negation: bool = True) -> dict:
    """Per-label center-displacement statistics and direction agreement.

    ``predictions``: sequence of ``(clip, (m, 4, 2))``; only the first preview step
    is scored. Labels outside Left/Right/Up/Down are skipped. If flipping the
    sign of every displacement raises the overall agreement, the flip is
    applied and reported as ``negated``.
    """
    if len(predictions) != len(labels):
        raise LabelMismatch(f"{len(predictions)} predictions vs {len(labels)} labels")
    rows = []
    for (clip, pred), lab in zip(predictions, labels):
        if lab is None:
            raise LabelMismatch(f"no label for clip {clip}")
        lab = MotionClass(lab)
        if lab not in DIRECTIONAL:
            continue
        d = np.asarray(pred, dtype=np.float64).reshape(-1, 4, 2)[0]
        rows.append((lab, center_displacement(d, geom)))

    def score(sign):
        hits = 0
        for lab, cd in rows:
            hits += dominant_direction(sign * cd, dead_zone) == lab
        return hits

    negated = bool(allow_negation and rows and score(-1.0) > score(1.0))
    sign = -1.0 if negated else 1.0
    table = {}
    for lab in DIRECTIONAL:
        cds = np.array([sign * cd for l, cd in rows if l is lab]).reshape(-1, 2)
        if not len(cds):
            continue
        dom = [dominant_direction(cd, dead_zone) for cd in cds]
        q = np.percentile(cds, [25, 50, 75], axis=0)
        table[lab.value] = {
            "n": int(len(cds)),
            "agreement": float(np.mean([d == lab for d in dom])),
            "abstentions": int(sum(d is None for d in dom)),
            "mean": cds.mean(axis=0).tolist(),
            "q25": q[0].tolist(), "median": q[1].tolist(), "q75": q[2].tolist(),
        }
    total = sum(v["n"] for v in table.values())
    overall = sum(v["agreement"] * v["n"] for v in table.values()) / total if total else float("nan")
    return {"negated": negated, "dead_zone": dead_zone, "overall": overall, "classes": table,
            "points": [(l.value, (sign * cd).tolist()) for l, cd in rows]}


# ---------------------------------------------------------------- overlays

def warp_frame(frame, d, backend=None) -> tuple[np.ndarray, np.ndarray]:
    """Warp ``frame`` forward by the delta's homography; returns ``(warped, valid)``."""
    f = np.ascontiguousarray(frame, dtype=np.float64)
    geom = hg.FrameGeometry(f.shape[1], f.shape[0])
    hinv = np.ascontiguousarray(hg.invert(hg.matrix_from_four_point(d, geom)))
    k = get_backend(backend)
    warped = k.warp_bilinear(f, hinv, geom.height, geom.width, 0.0)
    valid = k.warp_bilinear(np.ones_like(f), hinv, geom.height, geom.width, 0.0) >= 1.0 - 1e-9
    return warped, valid


def warp_overlay(past, current, d, backend=None) -> np.ndarray:
    """RGB float image: warped past in red and green, current in blue."""
    past = np.asarray(past, dtype=np.float64)
    current = np.asarray(current, dtype=np.float64)
    if past.shape != current.shape:
        raise ValueError("frames differ in size")
    warped, _ = warp_frame(past, d, backend)
    return np.stack([warped, warped, current], axis=-1)


def overlay_misalignment(past, current, d, backend=None) -> float:
    """Mean ``|R - B|`` of the overlay inside the region the warped past covers."""
    warped, valid = warp_frame(past, d, backend)
    if not valid.any():
        return float("nan")
    return float(np.abs(warped - np.asarray(current, dtype=np.float64))[valid].mean())


# ---------------------------------------------------------------- benchmark

def _peak_rss_kb() -> int:
    return int(resource.getrusage(resource.RUSAGE_SELF).ru_maxrss)


def run_benchmark(estimators, sequence, repeats: int = 10) -> list[dict]:
    """Wall time of each ``(name, fn)`` applied to ``sequence``; the first call is a warm-up.

    ``speedup`` is relative to the slowest estimator.
    """
    if repeats < 2:
        raise ValueError("repeats must be >= 2")
    rows = []
    for name, fn in estimators:
        rss0 = _peak_rss_kb()
        fn(sequence)
        times = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            fn(sequence)
            times.append(time.perf_counter() - t0)
        t = np.array(times)
        rows.append({"method": name, "mean_s": float(t.mean()), "std_s": float(t.std()),
                     "repeats": repeats, "peak_rss_delta_kb": _peak_rss_kb() - rss0})
    slowest = max(r["mean_s"] for r in rows)
    for r in rows:
        r["speedup"] = slowest / r["mean_s"] if r["mean_s"] > 0 else float("inf")
    return rows


def estimator_suite(dn: int = 1, cfg=None):
    """One track estimator per available kernel backend."""
    from .estimation import RansacConfig, estimate_track
    from .kernels import BACKENDS

    cfg = cfg or RansacConfig()
    return [(f"ransac-{name}", (lambda seq, b=name: estimate_track(seq, dn, cfg, backend=b, threads=1)))
            for name in sorted(BACKENDS)]


def benchmark_sequence(length: int = 15, seed: int = 0, geom=None):
    from .synthetic import generate_scene, generate_trajectory, render_sequence

    geom = geom or hg.FrameGeometry(320, 240)
    scene = generate_scene(seed)
    traj = generate_trajectory("random_projective", length - 1, {"max_displacement": 3.0}, seed, geom)
    return render_sequence(scene, traj, geom).frames


def write_benchmark(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "time_s", "std_s", "speedup", "repeats", "peak_rss_delta_kb"])
        for r in rows:
            w.writerow([r["method"], f"{r['mean_s']:.6f}", f"{r['std_s']:.6f}", f"{r['speedup']:.3f}",
                        r["repeats"], r["peak_rss_delta_kb"]])


# ---------------------------------------------------------------- report

def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=True)


@dataclass
class EvalReport:
    methods: dict
    clips: list
    agreement: dict | None = None
    config: dict = field(default_factory=dict)

    @classmethod
    def build(cls, clips, preds: dict, targets, labels=None, geom=None, config=None):
        """``preds`` maps method name to ``(k, m, 4, 2)`` arrays aligned with ``clips``."""
        targets = np.asarray(targets, dtype=np.float64)
        if len(clips) == 0:
            raise EmptySet("no clips to evaluate")
        errs = {name: corner_errors(p, targets) for name, p in preds.items()}
        methods = {name: {"mpd_mean": float(e.mean()), "mpd_std": float(e.std()), "n": int(len(e))}
                   for name, e in errs.items()}
        records = []
        for i, c in enumerate(clips):
            r = {"video_id": c.video_id, "start": int(c.start), "anchor": int(c.anchor)}
            if labels is not None:
                r["label"] = None if labels[i] is None else MotionClass(labels[i]).value
            for name, e in errs.items():
                r[name] = float(e[i])
            records.append(r)
        agreement = None
        if labels is not None and "predictor" in preds and geom is not None:
            keep = [i for i, l in enumerate(labels) if l is not None]
            agreement = label_agreement([(clips[i], preds["predictor"][i]) for i in keep],
                                        [labels[i] for i in keep], geom)
        return cls(methods, records, agreement, dict(config or {}))

    def to_json(self) -> dict:
        return {"methods": self.methods, "clips": self.clips, "label_agreement": self.agreement,
                "config": self.config}

    def content_hash(self) -> str:
        return hashlib.sha256(_canonical(self.to_json()).encode()).hexdigest()

    def improvement(self, method="predictor", baseline="taylor_o1") -> float:
        """Relative MPD reduction of ``method`` over ``baseline``."""
        return 1.0 - self.methods[method]["mpd_mean"] / self.methods[baseline]["mpd_mean"]

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        data = self.to_json()
        data["content_hash"] = self.content_hash()
        (out / "report.json").write_text(json.dumps(data, indent=1))
        names = list(self.methods)
        with open(out / "clips.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            head = ["video_id", "start", "anchor"] + (["label"] if self.clips and "label" in self.clips[0] else [])
            w.writerow(head + names)
            for r in self.clips:
                w.writerow([r[h] for h in head] + [repr(r[n]) for n in names])
        with open(out / "summary.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["method", "mpd_mean", "mpd_std", "n"])
            for n, v in self.methods.items():
                w.writerow([n, repr(v["mpd_mean"]), repr(v["mpd_std"]), v["n"]])
        return out / "report.json"


def read_report(path) -> EvalReport:
    data = json.loads(Path(path).read_text())
    return EvalReport(data["methods"], data["clips"], data.get("label_agreement"), data.get("config", {}))


def write_center_scatter(path, agreement: dict) -> None:
    """Center displacements grouped by label, one panel per class."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    labels = [c.value for c in DIRECTIONAL]
    fig, axes = plt.subplots(1, len(labels), figsize=(3 * len(labels), 3), sharex=True, sharey=True)
    for ax, lab in zip(axes, labels):
        pts = np.array([p for l, p in agreement["points"] if l == lab]).reshape(-1, 2)
        ax.scatter(pts[:, 0], pts[:, 1], s=6, alpha=0.6)
        ax.axhline(0, color="0.7", lw=0.5)
        ax.axvline(0, color="0.7", lw=0.5)
        ax.set_xlim(-1, 1)
        ax.set_ylim(1, -1)  # image y points down
        ax.set_title(lab)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
