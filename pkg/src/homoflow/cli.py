"""homoflow command line: synth, estimate, classify, sample, train, predict, eval, bench, pipeline.

Exit codes: 0 ok, 1 internal error, 2 bad input, 3 quality gate.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path

from threadpoolctl import threadpool_limits

from . import homography as hg
from .errors import HomoflowError
from .manifest import build_manifest, write_manifest

log = logging.getLogger("homoflow")

EXIT_OK, EXIT_INTERNAL, EXIT_INPUT, EXIT_QUALITY = 0, 1, 2, 3
MAX_MISSING = 0.5


class InputError(Exception):
    """Bad or unreadable input; exit code 2."""


class QualityGate(Exception):
    """Output written but failed a quality check; exit code 3."""


def _threads_default() -> int:
    try:
        return max(1, int(os.environ.get("HOMOFLOW_THREADS", "1")))
    except ValueError:
        return 1


def _json_arg(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise argparse.ArgumentTypeError(f"invalid JSON: {e}") from e


def _manifest_path(out: Path) -> Path:
    out = Path(out)
    if out.suffix:
        return out.with_name(out.stem + ".manifest.json")
    return out / "manifest.json"


def _finish(args, config, seeds, inputs, outputs, t0, extra=None):
    m = build_manifest(args.command_line, config, seeds, inputs, outputs, time.time() - t0, extra)
    write_manifest(_manifest_path(args.out), m)
    return m


def _require_dir(path, what):
    p = Path(path)
    if not p.is_dir():
        raise InputError(f"{what} {p} is not a directory")
    return p


def _require_file(path, what):
    p = Path(path)
    if not p.is_file():
        raise InputError(f"{what} {p} does not exist")
    return p


# ---------------------------------------------------------------- synth

def cmd_synth(args):
    from .pipeline import write_labels
    from .frames import write_frames
    from .sampling import compute_sigma
    from .synthetic import relabel, render_video
    from .track import write_track

    t0 = time.time()
    geom = hg.FrameGeometry(args.width, args.height)
    out = Path(args.out)
    obj = None
    if args.object_area:
        obj = {"area": args.object_area, "velocity": args.object_velocity, "seed": args.seed}
    outputs, seqs = [], []
    for i in range(args.videos):
        s = render_video(args.kind, i, args.frames, args.seed, geom, args.params, args.dn, args.canvas_size,
                         None, obj, args.noise)
        vid = s.truth.video_id
        write_frames(out / "frames" / vid, s.frames)
        write_track(out / "tracks" / f"{vid}.jsonl", s.truth)
        s.frames = None  # keep only truth and labels in memory
        seqs.append(s)
        outputs += [out / "frames" / vid, out / "tracks" / f"{vid}.jsonl"]
        log.info("rendered %s", vid)
    sigma = compute_sigma([s.truth for s in seqs])
    relabel(seqs, sigma, geom)
    write_labels(out / "labels.csv", {s.truth.video_id: s.labels for s in seqs})
    outputs.append(out / "labels.csv")
    config = {k: v for k, v in vars(args).items() if k not in ("func", "command_line", "threads")}
    _finish(args, config, {"seed": args.seed}, {}, outputs, t0, {"sigma": sigma})
    print(f"wrote {args.videos} video(s) to {out}")
    return EXIT_OK


# ---------------------------------------------------------------- estimate

def cmd_estimate(args):
    from .estimation import MatcherConfig, RansacConfig, estimate_track
    from .frames import list_frames, read_frame
    from .track import write_track

    t0 = time.time()
    fdir = _require_dir(args.frames, "frames")
    paths = list_frames(fdir)
    if len(paths) < args.dn + 1:
        raise InputError(f"need at least {args.dn + 1} frames in {fdir}, found {len(paths)}")
    try:
        frames = [read_frame(p) for p in paths]
    except OSError as e:
        raise InputError(f"unreadable frame: {e}") from e
    if len({f.shape for f in frames}) > 1:
        raise InputError("frames differ in size")
    cfg = RansacConfig(args.max_iters, args.threshold, args.min_inlier_ratio, args.seed)
    matcher = MatcherConfig(search_radius=args.search_radius)
    vid = args.video_id or fdir.name
    track = estimate_track(frames, args.dn, cfg, matcher, video_id=vid, fps=args.fps,
                           threads=args.threads, backend=args.backend)
    write_track(args.out, track)
    missing = float(1.0 - track.present.mean())
    config = {"frames": str(fdir), "dn": args.dn, "ransac": asdict(cfg),
              "search_radius": args.search_radius, "backend": args.backend}
    _finish(args, config, {"ransac": args.seed}, {"frames": fdir}, [args.out], t0,
            {"missing_fraction": missing})
    print(f"{vid}: {len(track)} entries, {missing:.1%} missing -> {args.out}")
    if missing > MAX_MISSING:
        raise QualityGate(f"{missing:.1%} of estimates missing (limit {MAX_MISSING:.0%})")
    return EXIT_OK


# ---------------------------------------------------------------- classify

def _load_tracks(path):
    from .track import read_track, read_tracks

    p = Path(path)
    if p.is_dir():
        tracks = read_tracks(p)
    elif p.is_file():
        tracks = [read_track(p)]
    else:
        raise InputError(f"no track file or directory at {p}")
    if not tracks:
        raise InputError(f"no tracks under {p}")
    return tracks


def cmd_classify(args):
    from .motion import distribution, write_distribution
    from .sampling import compute_sigma

    t0 = time.time()
    tracks = _load_tracks(args.tracks)
    sigma = compute_sigma(tracks) if args.sigma == "auto" else float(args.sigma)
    dist = distribution(tracks, max(sigma, 1e-6))
    dist.sigma_used = sigma
    write_distribution(args.out, dist, svg=not args.no_svg)
    _finish(args, {"tracks": str(args.tracks), "sigma": args.sigma}, {}, {"tracks": args.tracks},
            [Path(args.out) / "distribution.json"], t0)
    fr = dist.fractions()
    for c, f in fr.items():
        print(f"{c.value:>13s} {dist.counts[c]:7d} {100 * f:6.2f}%")
    return EXIT_OK


# ---------------------------------------------------------------- sample

def cmd_sample(args):
    from .sampling import ClipSpec, compute_sigma, enumerate_clips, importance_sample_dataset, write_clip_index

    t0 = time.time()
    tracks = _load_tracks(args.tracks)
    spec = ClipSpec(args.n, args.m, args.dn, args.dc)
    for t in tracks:
        if t.dn != spec.dn:
            raise InputError(f"track {t.video_id} has dn={t.dn}, clips use dn={spec.dn}")
    sigma = compute_sigma(tracks) if args.sigma is None else args.sigma
    if args.all:
        clips = [c for t in tracks for c in enumerate_clips(t, spec)]
    else:
        clips = importance_sample_dataset(tracks, sigma, spec, args.count, args.seed)
    write_clip_index(args.out, spec, sigma, clips)
    _finish(args, {"spec": asdict(spec), "count": args.count,
                   "all": args.all, "sigma": sigma}, {"sample": args.seed}, {"tracks": args.tracks}, [args.out], t0)
    print(f"{len(clips)} clips (sigma {sigma:.4f}) -> {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------- train / predict / eval

def _clip_videos(clip_path, tracks, frames, input_size, labels=None):
    from .pipeline import videos_from_disk
    from .sampling import read_clip_index

    spec, sigma, clips = read_clip_index(_require_file(clip_path, "clip index"))
    if not clips:
        raise InputError(f"no clips in {clip_path}")
    tdir = _require_dir(tracks, "tracks")
    froot = Path(frames) if frames else tdir.parent / "frames"
    _require_dir(froot, "frames root")
    videos = videos_from_disk(tdir, froot, input_size, {c.video_id for c in clips}, labels)
    by_id = {v.video_id: v for v in videos}
    missing = {c.video_id for c in clips} - set(by_id)
    if missing:
        raise InputError(f"clips reference unknown videos: {sorted(missing)[:3]}")
    return spec, sigma, clips, by_id


def cmd_train(args):
    from .pipeline import clip_arrays, make_augmenter
    from .predictor import TrainConfig, save_model, train, write_loss_log

    t0 = time.time()
    raw = json.loads(_require_file(args.config, "config").read_text()) if args.config else {}
    if args.seed is not None:
        raw["seed"] = args.seed
    cfg = TrainConfig.from_dict(raw)
    spec, sigma, clips, by_id = _clip_videos(args.clips, args.tracks, args.frames, args.input_size)
    x, y, _ = clip_arrays(clips, by_id)
    xv = yv = None
    if args.val_clips:
        _, _, vclips, vby = _clip_videos(args.val_clips, args.tracks, args.frames, args.input_size)
        xv, yv, _ = clip_arrays(vclips, vby)
    geom = next(iter(by_id.values())).track.geometry
    augment = None
    if not (args.no_geometric and args.no_photometric):
        augment = make_augmenter(geom, cfg.seed, not args.no_geometric, not args.no_photometric)
    with threadpool_limits(1):
        model, rows = train(x, y, cfg, xv, yv, augment)
    save_model(args.out, model)
    log_path = Path(args.out).with_name(Path(args.out).stem + "_loss.csv")
    write_loss_log(log_path, rows)
    _finish(args, {"train": cfg.to_dict(), "input_size": list(args.input_size),
                   "geometric": not args.no_geometric, "photometric": not args.no_photometric},
            {"train": cfg.seed}, {"clips": args.clips, "tracks": args.tracks}, [args.out, log_path], t0)
    last = [r for r in rows if r[1] == "train"][-1]
    print(f"trained on {len(clips)} clips, final train loss {last[2]:.4f} -> {args.out}")
    return EXIT_OK


def _load_model(path):
    from .predictor import load_model

    return load_model(_require_file(path, "model"))


def cmd_predict(args):
    from .pipeline import evaluate_clips

    t0 = time.time()
    model = _load_model(args.model)
    size = tuple(model.frame_shape)
    spec, _, clips, by_id = _clip_videos(args.clips, args.tracks, args.frames, size)
    _, preds = evaluate_clips(model, clips, by_id)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w") as fh:
        for i, c in enumerate(clips):
            rec = {"video_id": c.video_id, "start": c.start, "anchor": c.anchor}
            for name, p in preds.items():
                rec[name] = [hg.delta_to_list(d) for d in p[i]]
            fh.write(json.dumps(rec) + "\n")
    _finish(args, {"clips": str(args.clips)}, {}, {"clips": args.clips, "model": args.model}, [out], t0)
    print(f"{len(clips)} predictions -> {out}")
    return EXIT_OK


def cmd_eval(args):
    from .evaluation import write_center_scatter
    from .pipeline import evaluate_clips, write_overlays

    t0 = time.time()
    model = _load_model(args.model)
    labels = _require_file(args.labels, "labels") if args.labels else None
    spec, sigma, clips, by_id = _clip_videos(args.clips, args.tracks, args.frames, tuple(model.frame_shape),
                                             labels)
    report, preds = evaluate_clips(model, clips, by_id, {"clips": str(args.clips), "sigma": sigma})
    out = Path(args.out)
    report.write(out)
    if report.agreement:
        write_center_scatter(out / "center_displacement.svg", report.agreement)
    write_overlays(out / "overlays", clips, by_id, preds, args.overlays, args.threads)
    _finish(args, {"clips": str(args.clips), "overlays": args.overlays}, {},
            {"clips": args.clips, "model": args.model, "labels": labels}, [out / "report.json"], t0,
            {"report_hash": report.content_hash()})
    _print_report(report)
    return EXIT_OK


def _print_report(report):
    for name, v in report.methods.items():
        print(f"{name:>10s}  MPD {v['mpd_mean']:.3f} +- {v['mpd_std']:.3f} px  (n={v['n']})")
    if report.agreement:
        for lab, v in report.agreement["classes"].items():
            print(f"{lab:>10s}  agreement {v['agreement']:.3f}  (n={v['n']})")


# ---------------------------------------------------------------- bench

def cmd_bench(args):
    from .evaluation import benchmark_sequence, estimator_suite, run_benchmark, write_benchmark

    t0 = time.time()
    seq = benchmark_sequence(args.length, args.seed, hg.FrameGeometry(args.width, args.height))
    rows = run_benchmark(estimator_suite(), seq, args.repeats)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_benchmark(out, rows)
    _finish(args, {"length": args.length, "repeats": args.repeats, "width": args.width,
                   "height": args.height}, {"sequence": args.seed}, {}, [out], t0)
    for r in rows:
        print(f"{r['method']:>16s}  {r['mean_s']:.4f} +- {r['std_s']:.4f} s  x{r['speedup']:.2f}")
    return EXIT_OK


# ---------------------------------------------------------------- pipeline

def _set_path(cfg, dotted, value):
    keys = dotted.split(".")
    d = cfg
    for k in keys[:-1]:
        d = d.setdefault(k, {})
    d[keys[-1]] = value


def cmd_pipeline(args):
    from .pipeline import StageError, plan, run_pipeline, validate_config

    t0 = time.time()
    raw = json.loads(_require_file(args.config, "config").read_text()) if args.config else {}
    for item in args.set or []:
        if "=" not in item:
            raise InputError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        try:
            v = json.loads(v)
        except json.JSONDecodeError:
            pass
        _set_path(raw, k, v)
    if args.seed is not None:
        for k in ("data", "clips", "augment", "train"):
            _set_path(raw, f"{k}.seed", args.seed)
    raw["threads"] = args.threads
    try:
        cfg = validate_config(raw)
    except (ValueError, TypeError, KeyError) as e:
        raise InputError(f"invalid config: {e}") from e
    if args.dry_run:
        print(json.dumps(cfg, indent=1))
        for line in plan(cfg):
            print("plan:", line)
        return EXIT_OK
    try:
        res = run_pipeline(cfg, args.out)
    except StageError as e:
        print(f"pipeline failed at stage '{e.stage}': {e.cause}", file=sys.stderr)
        if e.stage in ("data", "split", "sample") and isinstance(e.cause, (HomoflowError, OSError, ValueError)):
            return EXIT_INPUT
        return EXIT_INTERNAL
    seeds = {k: cfg[k].get("seed") for k in ("data", "clips", "augment", "train")}
    inputs = {"root": cfg["data"]["root"]} if "root" in cfg["data"] else {}
    _finish(args, {k: v for k, v in cfg.items() if k != "threads"}, seeds, inputs,
            [Path(args.out) / "report.json"], t0, {"report_hash": res.report.content_hash()})
    _print_report(res.report)
    print(f"improvement over taylor_o1: {100 * res.report.improvement():.1f}%")
    print(f"report hash {res.report.content_hash()}")
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="homoflow", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_)
        sp.set_defaults(func=func)
        sp.add_argument("--threads", type=int, default=_threads_default(),
                        help="worker threads (default $HOMOFLOW_THREADS or 1)")
        return sp

    sp = add("synth", cmd_synth, "render a synthetic planar-scene video dataset")
    sp.add_argument("action", choices=["gen"])
    sp.add_argument("--kind", default="cue")
    sp.add_argument("--frames", type=int, default=3000, help="frames per video")
    sp.add_argument("--videos", type=int, default=1)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--width", type=int, default=128)
    sp.add_argument("--height", type=int, default=96)
    sp.add_argument("--dn", type=int, default=5)
    sp.add_argument("--canvas-size", type=int, default=1024)
    sp.add_argument("--params", type=_json_arg, default=None, help="trajectory parameters as JSON")
    sp.add_argument("--object-area", type=float, default=0.0)
    sp.add_argument("--object-velocity", type=float, nargs=2, default=(4.0, 3.0))
    sp.add_argument("--noise", type=float, default=0.0, help="additive gaussian noise std")
    sp.add_argument("--out", required=True)

    sp = add("estimate", cmd_estimate, "estimate the motion track of a frame directory")
    sp.add_argument("--frames", required=True)
    sp.add_argument("--dn", type=int, default=5)
    sp.add_argument("--threshold", type=float, default=1.0, help="RANSAC inlier threshold [px]")
    sp.add_argument("--max-iters", type=int, default=2000)
    sp.add_argument("--min-inlier-ratio", type=float, default=0.3)
    sp.add_argument("--search-radius", type=int, default=16)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--fps", type=float, default=25.0)
    sp.add_argument("--video-id", default=None)
    sp.add_argument("--backend", choices=["cython", "python"], default=None)
    sp.add_argument("--out", required=True)

    sp = add("classify", cmd_classify, "motion class distribution of one or more tracks")
    sp.add_argument("--tracks", required=True)
    sp.add_argument("--sigma", default="auto")
    sp.add_argument("--no-svg", action="store_true")
    sp.add_argument("--out", required=True)

    sp = add("sample", cmd_sample, "importance-sample clips from tracks")
    sp.add_argument("--tracks", required=True)
    sp.add_argument("--n", type=int, default=14)
    sp.add_argument("--m", type=int, default=1)
    sp.add_argument("--dn", type=int, default=5)
    sp.add_argument("--dc", type=int, default=5)
    sp.add_argument("--count", type=int, default=None)
    sp.add_argument("--sigma", type=float, default=None)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--all", action="store_true", help="every complete clip, no importance sampling")
    sp.add_argument("--out", required=True)

    def clip_inputs(sp):
        sp.add_argument("--clips", required=True)
        sp.add_argument("--tracks", required=True)
        sp.add_argument("--frames", default=None, help="frames root (default: sibling 'frames' of --tracks)")

    sp = add("train", cmd_train, "train the motion predictor")
    clip_inputs(sp)
    sp.add_argument("--val-clips", default=None)
    sp.add_argument("--config", default=None, help="training config JSON")
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--input-size", type=int, nargs=2, default=(32, 32))
    sp.add_argument("--no-geometric", action="store_true")
    sp.add_argument("--no-photometric", action="store_true")
    sp.add_argument("--out", required=True)

    sp = add("predict", cmd_predict, "predict preview motion for clips")
    clip_inputs(sp)
    sp.add_argument("--model", required=True)
    sp.add_argument("--out", required=True)

    sp = add("eval", cmd_eval, "evaluate predictor and baselines")
    clip_inputs(sp)
    sp.add_argument("--model", required=True)
    sp.add_argument("--labels", default=None)
    sp.add_argument("--overlays", type=int, default=4)
    sp.add_argument("--out", required=True)

    sp = add("bench", cmd_bench, "time the motion estimator backends")
    sp.add_argument("--length", type=int, default=15)
    sp.add_argument("--repeats", type=int, default=10)
    sp.add_argument("--width", type=int, default=320)
    sp.add_argument("--height", type=int, default=240)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)

    sp = add("pipeline", cmd_pipeline, "sample, train and evaluate in one run")
    sp.add_argument("--config", default=None)
    sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config entry")
    sp.add_argument("--seed", type=int, default=None, help="set every seed in the config")
    sp.add_argument("--dry-run", action="store_true")
    sp.add_argument("--out", required=True)
    return p


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args.command_line = " ".join(["homoflow"] + argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        return args.func(args)
    except QualityGate as e:
        print(f"quality gate: {e}", file=sys.stderr)
        return EXIT_QUALITY
    except (InputError, HomoflowError, OSError, ValueError) as e:
        print(f"bad input: {e}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as e:  # noqa: BLE001
        log.exception("internal error")
        print(f"internal error: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
