"""End-to-end run: video database -> importance-sampled clips -> online
augmentation -> predictor training -> evaluation against Taylor baselines."""
from __future__ import annotations

import copy
import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import augmentation as aug
from . import homography as hg
from .errors import EmptyDataset, HomoflowError, NoCandidates
from .estimation import RansacConfig, estimate_track
from .evaluation import EvalReport, warp_overlay, write_center_scatter
from .frames import downsample, list_frames, read_frame, write_rgb
from .motion import MotionClass
from .predictor import TrainConfig, predict, save_model, taylor_o1, taylor_o2, train, write_loss_log
from .sampling import Clip, ClipSpec, compute_sigma, importance_sample_dataset, write_clip_index
from .synthetic import generate_dataset
from .track import MotionTrack, read_track

log = logging.getLogger(__name__)

DEFAULT_CONFIG = {
    "data": {
        "kind": "cue", "videos": 12, "frames": 1500, "seed": 0, "width": 128, "height": 96,
        "canvas_size": 1024, "params": {},
    },
    "track_source": "truth",
    "input_size": [32, 32],
    "clips": {"n": 14, "m": 1, "dn": 5, "dc": 5, "train_count": None, "test_count": None, "seed": 0},
    "split": {"test": 0.2, "val": 0.1},
    "augment": {"geometric": True, "photometric": True, "seed": 0},
    "train": {"epochs": 40, "batch_size": 64, "learning_rate": 1e-3, "lr_drops": [[25, 0.5]],
              "lambda": 0.1, "seed": 0, "hidden_dims": [128]},
    "eval": {"overlays": 4},
    "threads": 1,
}

TRACK_SOURCES = ("truth", "estimate")


class StageError(HomoflowError):
    def __init__(self, stage, err):
        super().__init__(f"{stage}: {err}")
        self.stage = stage
        self.cause = err


def merge_config(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in (override or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k not in ("params",):
            out[k] = merge_config(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def validate_config(cfg: dict) -> dict:
    """Fill defaults and check types; raises ``ValueError`` naming the bad key."""
    cfg = merge_config(DEFAULT_CONFIG, cfg)
    unknown = set(cfg) - set(DEFAULT_CONFIG)
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    if cfg["track_source"] not in TRACK_SOURCES:
        raise ValueError(f"track_source must be one of {TRACK_SOURCES}")
    data = cfg["data"]
    if "root" not in data:
        for k in ("videos", "frames", "width", "height"):
            if int(data[k]) < 1:
                raise ValueError(f"data.{k} must be >= 1")
    ClipSpec(**{k: cfg["clips"][k] for k in ("n", "m", "dn", "dc")})
    TrainConfig.from_dict(cfg["train"])
    te, va = cfg["split"]["test"], cfg["split"]["val"]
    if not (0 < te < 1 and 0 <= va < 1 and te + va < 1):
        raise ValueError("split fractions must be in (0, 1) and sum below 1")
    if int(cfg["threads"]) < 1:
        raise ValueError("threads must be >= 1")
    return cfg


@dataclass
class Video:
    video_id: str
    frames: np.ndarray      # (T, h, w) downsampled predictor input
    track: MotionTrack      # motion used for targets and baselines
    labels: list | None = None   # per-entry motion class of the truth, if known


# ---------------------------------------------------------------- data

def _synth_videos(cfg) -> list[Video]:
    d = cfg["data"]
    geom = hg.FrameGeometry(int(d["width"]), int(d["height"]))
    dn = int(cfg["clips"]["dn"])
    size = tuple(cfg["input_size"])
    estimate = cfg["track_source"] == "estimate"
    seqs = generate_dataset(d["kind"], int(d["videos"]), int(d["frames"]), int(d["seed"]), geom,
                            d.get("params") or {}, dn, int(d["canvas_size"]),
                            output_size=None if estimate else size, threads=int(cfg["threads"]))
    videos = []
    for s in seqs:
        track = s.truth
        frames = s.frames
        if estimate:
            track = estimate_track(frames, dn, RansacConfig(seed=int(d["seed"])), video_id=track.video_id,
                                   threads=int(cfg["threads"]))
            track.meta = dict(s.truth.meta)
            frames = [downsample(f, size) for f in frames]
        videos.append(Video(s.truth.video_id, np.asarray(frames, dtype=np.float32), track,
                            [c.value for c in s.labels]))
    return videos


def read_labels(path) -> dict:
    """Label CSV ``video_id,start_frame,label``: each row starts a segment that
    lasts until the next row of the same video."""
    out = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.setdefault(row["video_id"], []).append((int(row["start_frame"]), MotionClass(row["label"])))
    for v in out.values():
        v.sort(key=lambda r: r[0])
    return out


def write_labels(path, videos: dict) -> None:
    """Run-length encode per-entry labels ``{video_id: [class, ...]}`` into segment rows."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["video_id", "start_frame", "label"])
        for vid in sorted(videos):
            prev = None
            for n, lab in enumerate(videos[vid]):
                lab = MotionClass(lab).value
                if lab != prev:
                    w.writerow([vid, n, lab])
                    prev = lab


def label_at(segments, frame: int):
    if not segments:
        return None
    starts = [s for s, _ in segments]
    i = int(np.searchsorted(starts, frame, side="right")) - 1
    return None if i < 0 else segments[i][1]


def videos_from_disk(tracks_dir, frames_root, input_size=(32, 32), video_ids=None,
                     labels_path=None) -> list[Video]:
    """Tracks ``tracks_dir/*.jsonl`` paired with frames ``frames_root/<video_id>/``."""
    videos = []
    for tp in sorted(Path(tracks_dir).glob("*.jsonl")):
        track = read_track(tp)
        if video_ids is not None and track.video_id not in video_ids:
            continue
        paths = list_frames(Path(frames_root) / track.video_id)
        if len(paths) < track.frame_count:
            raise EmptyDataset(f"{track.video_id}: {len(paths)} frames for a track of {track.frame_count}")
        frames = np.asarray([downsample(read_frame(p), tuple(input_size)) for p in paths], dtype=np.float32)
        videos.append(Video(track.video_id, frames, track))
    if not videos:
        raise EmptyDataset(f"no tracks under {tracks_dir}")
    if labels_path is not None and Path(labels_path).exists():
        segs = read_labels(labels_path)
        for v in videos:
            s = segs.get(v.video_id)
            if s is not None:
                v.labels = [getattr(label_at(s, n), "value", None) for n in range(len(v.track))]
    return videos


def _disk_videos(cfg) -> list[Video]:
    root = Path(cfg["data"]["root"])
    tdir = root / ("tracks" if cfg["track_source"] == "truth" else "estimates")
    return videos_from_disk(tdir, root / "frames", cfg["input_size"], labels_path=root / "labels.csv")


def load_videos(cfg) -> list[Video]:
    return _disk_videos(cfg) if "root" in cfg["data"] else _synth_videos(cfg)


def split_videos(videos, test: float, val: float):
    """Deterministic split by video order: last ``test`` fraction of frames for testing,
    the ``val`` fraction before it for validation."""
    total = sum(len(v.frames) for v in videos)
    cum = np.cumsum([len(v.frames) for v in videos]) / total
    tr, va, te = [], [], []
    for v, c in zip(videos, cum):
        if c <= 1 - test - val + 1e-9:
            tr.append(v)
        elif c <= 1 - test + 1e-9:
            va.append(v)
        else:
            te.append(v)
    if not te:
        te.append(tr.pop())
    if not tr:
        raise EmptyDataset("not enough videos for a training split")
    return tr, va, te


# ---------------------------------------------------------------- clips

def clip_arrays(clips, videos: dict):
    """Recall stacks, targets and recall motions for each clip."""
    x = np.stack([videos[c.video_id].frames[c.recall_frames] for c in clips])
    y = np.stack([videos[c.video_id].track.deltas[c.target_indices] for c in clips])
    hist = np.stack([videos[c.video_id].track.deltas[c.recall_motion_indices] for c in clips])
    return x, y, hist


def clip_label(clip: Clip, video: Video):
    if video.labels is None:
        return None
    return video.labels[clip.anchor]


def sample_split(videos, sigma, spec, count, seed):
    if not videos:
        return []
    try:
        return importance_sample_dataset([v.track for v in videos], sigma, spec, count, seed)
    except NoCandidates:
        return []


def make_augmenter(geom: hg.FrameGeometry, seed: int, geometric=True, photometric=True):
    """Per-clip online augmentation; the draw depends only on (seed, epoch, clip)."""
    square = geom.width == geom.height
    kinds = list(aug.GeometricKind)
    if not square:
        # quarter turns would change the frame geometry the targets live in
        kinds = [k for k in kinds if not aug.GeometricTransform(k).swaps_axes]

    def augment(epoch, idx, xb, yb):
        xb = np.array(xb, copy=True)
        yb = np.array(yb, copy=True)
        for j, ci in enumerate(idx):
            s = int(np.random.SeedSequence([seed, epoch, int(ci)]).generate_state(1)[0])
            geo, photo = aug.sample_augmentation(s, photometric, geometric)
            if geo.kind not in kinds:
                geo = aug.GeometricTransform(kinds[s % len(kinds)])
            if geo.kind is not aug.GeometricKind.IDENTITY:
                xb[j] = np.asarray(aug.apply_geometric_sequence(list(xb[j]), geo))
                yb[j] = np.stack([aug.conjugate_motion(d, geo, geom) for d in yb[j]])
            if photo.kind is not aug.PhotometricKind.IDENTITY:
                xb[j] = np.asarray(aug.apply_photometric_sequence(list(xb[j]), photo))
        return xb, yb

    return augment


# ---------------------------------------------------------------- run

@dataclass
class PipelineResult:
    report: EvalReport
    model: object
    log_rows: list
    clips: dict
    sigma: float


def _stage(name, fn, *a, **kw):
    try:
        return fn(*a, **kw)
    except StageError:
        raise
    except Exception as e:  # noqa: BLE001
        raise StageError(name, e) from e


def plan(cfg: dict) -> list[str]:
    d = cfg["data"]
    src = f"read {d['root']}" if "root" in d else (
        f"synthesize {d['videos']} x {d['frames']} frames of kind {d['kind']} (seed {d['seed']})")
    c = cfg["clips"]
    t = cfg["train"]
    return [
        f"data: {src}; tracks from {cfg['track_source']}",
        f"clips: N={c['n']} M={c['m']} dn={c['dn']} dc={c['dc']}, importance sampled",
        f"split: test {cfg['split']['test']}, val {cfg['split']['val']}",
        f"augment: geometric={cfg['augment']['geometric']} photometric={cfg['augment']['photometric']}",
        f"train: {t['epochs']} epochs, batch {t['batch_size']}, lr {t['learning_rate']}, lambda {t['lambda']}",
        "eval: predictor vs taylor_o1, taylor_o2",
    ]


def run_pipeline(cfg: dict, out_dir=None, videos=None) -> PipelineResult:
    cfg = validate_config(cfg)
    threads = int(cfg["threads"])
    if videos is None:
        videos = _stage("data", load_videos, cfg)
    by_id = {v.video_id: v for v in videos}
    geom = videos[0].track.geometry
    c = cfg["clips"]
    spec = ClipSpec(int(c["n"]), int(c["m"]), int(c["dn"]), int(c["dc"]))
    tr, va, te = _stage("split", split_videos, videos, cfg["split"]["test"], cfg["split"]["val"])

    def sample():
        sigma = compute_sigma([v.track for v in tr])
        seed = int(c["seed"])
        return sigma, {
            "train": sample_split(tr, sigma, spec, c.get("train_count"), seed),
            "val": sample_split(va, sigma, spec, None, seed + 1),
            "test": sample_split(te, sigma, spec, c.get("test_count"), seed + 2),
        }

    sigma, clips = _stage("sample", sample)
    if not clips["train"] or not clips["test"]:
        raise StageError("sample", NoCandidates("no anchored clips in the train or test split"))
    log.info("clips: %s", {k: len(v) for k, v in clips.items()})

    tcfg = TrainConfig.from_dict(cfg["train"])
    augment = None
    if cfg["augment"]["geometric"] or cfg["augment"]["photometric"]:
        augment = make_augmenter(geom, int(cfg["augment"].get("seed", 0)),
                                 bool(cfg["augment"]["geometric"]), bool(cfg["augment"]["photometric"]))

    # numerics stay single-threaded so results never depend on --threads
    with threadpool_limits(1):
        xtr, ytr, _ = clip_arrays(clips["train"], by_id)
        xva = yva = None
        if clips["val"]:
            xva, yva, _ = clip_arrays(clips["val"], by_id)
        model, rows = _stage("train", train, xtr, ytr, tcfg, xva, yva, augment)

        echo = {k: v for k, v in cfg.items() if k != "threads"}
        echo["sigma"] = sigma
        echo["clip_counts"] = {k: len(v) for k, v in clips.items()}
        report, preds = _stage("eval", evaluate_clips, model, clips["test"], by_id, echo)

    result = PipelineResult(report, model, rows, clips, sigma)
    if out_dir is not None:
        _stage("write", write_outputs, result, out_dir, by_id, preds, cfg, threads)
    return result


def write_outputs(result: PipelineResult, out_dir, by_id, preds, cfg, threads=1):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result.report.write(out)
    save_model(out / "model.json", result.model)
    write_loss_log(out / "loss_log.csv", result.log_rows)

    for split, cl in result.clips.items():
        if cl:
            spec = cl[0].spec
            write_clip_index(out / f"clips_{split}.json", spec, result.sigma, cl)
    if result.report.agreement:
        write_center_scatter(out / "center_displacement.svg", result.report.agreement)
    write_overlays(out / "overlays", result.clips["test"], by_id, preds,
                   int(cfg["eval"].get("overlays", 0)), threads)


def evaluate_clips(model, clips, by_id: dict, config=None):
    """Predictor and both Taylor baselines on ``clips``; returns ``(report, preds)``."""
    if not clips:
        raise EmptyDataset("no clips to evaluate")
    m = clips[0].spec.m
    geom = by_id[clips[0].video_id].track.geometry
    x, y, hist = clip_arrays(clips, by_id)
    with threadpool_limits(1):
        preds = {
            "predictor": predict(model, x),
            "taylor_o1": np.stack([taylor_o1(h, m) for h in hist]),
            "taylor_o2": np.stack([taylor_o2(h, m) for h in hist]),
        }
    labels = [clip_label(cl, by_id[cl.video_id]) for cl in clips]
    if all(l is None for l in labels):
        labels = None
    return EvalReport.build(clips, preds, y, labels, geom, config), preds


def write_overlays(odir, clips, by_id, preds, count: int, threads: int = 1) -> list:
    """Warp the last recall frame by each prediction and overlay the first preview frame."""
    clips = clips[:count]
    if not clips:
        return []
    odir = Path(odir)
    odir.mkdir(parents=True, exist_ok=True)

    def one(i):
        cl = clips[i]
        v = by_id[cl.video_id]
        past = v.frames[cl.recall_frames[-1]]
        cur = v.frames[cl.preview_frames[0]]
        small = hg.FrameGeometry(past.shape[1], past.shape[0])
        paths = []
        for name in ("predictor", "taylor_o1"):
            d = preds[name][i][0] * _scale_to(small, v.track.geometry)
            p = odir / f"{cl.video_id}_{cl.anchor}_{name}.png"
            write_rgb(p, warp_overlay(past, cur, d))
            paths.append(p)
        return paths

    with ThreadPoolExecutor(threads) as pool:
        return [p for ps in pool.map(one, range(len(clips))) for p in ps]


def _scale_to(small: hg.FrameGeometry, full: hg.FrameGeometry) -> np.ndarray:
    """Per-axis factor mapping full-resolution corner deltas onto a downsampled frame."""
    return np.array([(small.width - 1) / (full.width - 1), (small.height - 1) / (full.height - 1)])


def load_config(path) -> dict:
    return json.loads(Path(path).read_text())
