"""Planar textured scenes rendered under known homography trajectories.

Ground-truth motion is computed analytically from the generating homographies,
never by estimation, so it can serve as an oracle for the estimator and the
predictor.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import homography as hg
from .errors import ParameterOutOfRange, ViewportEscape
from .frames import downsample
from .kernels import get_backend
from .motion import CLASSES, MotionClass, classify_many
from .track import MotionTrack

MAX_STEP_DISPLACEMENT = 20.0

KIND_ALIASES = {
    "constantvelocity": "constant_velocity",
    "cv": "constant_velocity",
    "linearacceleration": "linear_acceleration",
    "la": "linear_acceleration",
    "piecewiseconstantwithswitches": "piecewise",
    "piecewise": "piecewise",
    "cueconditioned": "cue",
    "cue": "cue",
    "randomprojective": "random_projective",
}

# unit content displacement for each cue direction
DIRECTIONS = {
    MotionClass.RIGHT: (1.0, 0.0),
    MotionClass.LEFT: (-1.0, 0.0),
    MotionClass.UP: (0.0, -1.0),
    MotionClass.DOWN: (0.0, 1.0),
}
DIRECTION_ORDER = [MotionClass.RIGHT, MotionClass.LEFT, MotionClass.UP, MotionClass.DOWN]


@dataclass
class Scene:
    canvas: np.ndarray
    seed: int

    @property
    def size(self) -> int:
        return self.canvas.shape[0]


@dataclass
class Trajectory:
    kind: str
    steps: np.ndarray  # (length, 3, 3); steps[t] maps frame t to frame t + 1
    seed: int = 0
    params: dict = field(default_factory=dict)
    cues: np.ndarray | None = None  # (length + 1,) index into DIRECTION_ORDER, -1 for no cue

    @property
    def length(self) -> int:
        return len(self.steps)


@dataclass
class RenderedSequence:
    frames: list
    truth: MotionTrack
    labels: list
    sigma: float
    cues: np.ndarray | None = None


def _normalize01(x, lo, hi):
    a, b = np.percentile(x, [1, 99])
    return np.clip(lo + (hi - lo) * (x - a) / (b - a), 0.0, 1.0)


def generate_scene(seed: int = 0, size: int = 1024) -> Scene:
    """Band-limited noise at three scales plus random blobs, intensities in [0.1, 0.85]."""
    if size < 512:
        raise ParameterOutOfRange("scene size must be >= 512")
    rng = np.random.default_rng(seed)
    tex = np.zeros((size, size))
    for sigma, weight in ((1.5, 1.0), (4.0, 0.8), (12.0, 0.6)):
        layer = ndimage.gaussian_filter(rng.standard_normal((size, size)), sigma, mode="wrap")
        tex += weight * layer / layer.std()
    yy, xx = np.mgrid[0:size, 0:size]
    blobs = np.zeros((size, size))
    for _ in range(size // 8):
        cx, cy = rng.uniform(0, size, 2)
        r = rng.uniform(3, 14)
        amp = rng.choice([-1.0, 1.0]) * rng.uniform(1.0, 2.5)
        y0, y1 = int(max(cy - 3 * r, 0)), int(min(cy + 3 * r + 1, size))
        x0, x1 = int(max(cx - 3 * r, 0)), int(min(cx + 3 * r + 1, size))
        sub = ((xx[y0:y1, x0:x1] - cx) ** 2 + (yy[y0:y1, x0:x1] - cy) ** 2) / (r * r)
        blobs[y0:y1, x0:x1] += amp * np.exp(-sub)
    return Scene(_normalize01(tex + blobs, 0.1, 0.85), seed)


def _step_displacement(g, geom):
    return float(np.max(np.linalg.norm(hg.four_point_from_matrix(g, geom), axis=1)))


def initial_viewport(geom: hg.FrameGeometry, canvas_size: int) -> np.ndarray:
    c = geom.center
    return hg.translation(canvas_size / 2.0 - c[0], canvas_size / 2.0 - c[1])


def viewports(steps, geom, canvas_size) -> np.ndarray:
    """Frame-to-canvas maps ``V_t``; ``V_{t+1} = V_t @ inv(G_t)``."""
    vs = np.empty((len(steps) + 1, 3, 3))
    vs[0] = initial_viewport(geom, canvas_size)
    for t, g in enumerate(steps):
        vs[t + 1] = hg.normalize(vs[t] @ np.linalg.inv(g))
    return vs


def check_viewports(vs, geom, canvas_size, margin=2.0):
    for t, v in enumerate(vs):
        c = hg.project(v, geom.corners)
        if np.any(c < margin) or np.any(c > canvas_size - 1 - margin):
            raise ViewportEscape(f"viewport leaves the canvas at frame {t}")


def _cue_trajectory(length, params, rng, geom, canvas_size):
    speed = float(params.get("speed", 2.0))
    burst = params.get("burst", (6, 14))
    gap = params.get("gap", (12, 30))
    lead = params.get("lead", (10, 30))
    ndir = int(params.get("directions", 4))
    if ndir not in (2, 4):
        raise ParameterOutOfRange("directions must be 2 or 4")
    if speed <= 0 or speed > MAX_STEP_DISPLACEMENT:
        raise ParameterOutOfRange("cue speed out of range")
    choices = DIRECTION_ORDER[:ndir]

    vel = np.zeros((length, 2))
    cues = np.full(length + 1, -1, dtype=np.int64)
    # viewport origin in canvas coordinates; content moving by +v shifts the viewport by -v
    origin = np.array([canvas_size / 2.0 - geom.center[0], canvas_size / 2.0 - geom.center[1]])
    lo = np.array([4.0, 4.0])
    hi = np.array([canvas_size - geom.width - 4.0, canvas_size - geom.height - 4.0])
    t = int(rng.integers(gap[0], gap[1] + 1))
    prev_stop = -1
    while t < length:
        blen = int(rng.integers(burst[0], burst[1] + 1))
        allowed = []
        for k, cls in enumerate(choices):
            end = origin - np.array(DIRECTIONS[cls]) * speed * blen
            if np.all(end >= lo) and np.all(end <= hi):
                allowed.append(k)
        if not allowed:
            raise ViewportEscape("no cue direction keeps the viewport inside the canvas")
        k = int(allowed[rng.integers(len(allowed))])
        cls = choices[k]
        cue_from = max(0, prev_stop + 1, t - int(rng.integers(lead[0], lead[1] + 1)))
        stop = min(t + blen, length)
        cues[cue_from:stop + 1] = DIRECTION_ORDER.index(cls)
        vel[t:stop] = np.array(DIRECTIONS[cls]) * speed
        origin = origin - np.array(DIRECTIONS[cls]) * speed * (stop - t)
        prev_stop = stop
        t = stop + int(rng.integers(gap[0], gap[1] + 1))
    return vel, cues


def generate_trajectory(kind: str, length: int, params: dict | None = None, seed: int = 0,
                        geom: hg.FrameGeometry | None = None, canvas_size: int | None = None) -> Trajectory:
    """Per-step ground-truth homographies (frame t -> t+1) for ``length`` steps.

    When ``canvas_size`` is given the accumulated viewport is checked against
    the canvas and :class:`ViewportEscape` raised if it would leave it.
    """
    kind_key = KIND_ALIASES.get(kind.lower().replace("-", "").replace("_", "").replace(" ", ""))
    if kind_key is None:
        raise ParameterOutOfRange(f"unknown trajectory kind {kind!r}")
    params = dict(params or {})
    geom = geom or hg.FrameGeometry(128, 96)
    rng = np.random.default_rng(seed)
    cues = None
    if kind_key == "constant_velocity":
        v = np.asarray(params.get("velocity", (2.0, 0.0)), dtype=np.float64)
        steps = np.stack([hg.translation(*v)] * length) if length else np.zeros((0, 3, 3))
    elif kind_key == "linear_acceleration":
        v0 = np.asarray(params.get("velocity", (0.0, 0.0)), dtype=np.float64)
        acc = np.asarray(params.get("acceleration", (1.0, 0.0)), dtype=np.float64)
        steps = np.stack([hg.translation(*(v0 + (t + 1) * acc)) for t in range(length)])
    elif kind_key == "piecewise":
        vels = np.asarray(params.get("velocities", [(2.0, 0.0), (-2.0, 0.0)]), dtype=np.float64)
        if "switches" in params:
            switches = sorted(int(s) for s in params["switches"])
        else:
            every = int(params.get("switch_every", 20))
            switches = list(range(every, length, every))
        seg = np.searchsorted(np.asarray(switches), np.arange(length), side="right")
        steps = np.stack([hg.translation(*vels[s % len(vels)]) for s in seg])
        params["switches"] = switches
    elif kind_key == "cue":
        size = canvas_size or 1024
        vel, cues = _cue_trajectory(length, params, rng, geom, size)
        steps = np.stack([hg.translation(*v) for v in vel])
    else:
        max_disp = float(params.get("max_displacement", 3.0))
        lim = max_disp / np.sqrt(2.0)
        steps = []
        while len(steps) < length:
            d = rng.uniform(-lim, lim, size=(4, 2))
            steps.append(hg.matrix_from_four_point(d, geom))
        steps = np.stack(steps) if steps else np.zeros((0, 3, 3))
    for g in steps:
        if _step_displacement(g, geom) > MAX_STEP_DISPLACEMENT + 1e-9:
            raise ParameterOutOfRange("per-step corner displacement exceeds 20 px")
    traj = Trajectory(kind_key, steps, seed, params, cues)
    if canvas_size is not None:
        check_viewports(viewports(steps, geom, canvas_size), geom, canvas_size)
    return traj


def cue_box(cls: MotionClass, geom: hg.FrameGeometry):
    """Pixel box ``(x0, y0, x1, y1)`` of the cue marker announcing ``cls``."""
    side = max(4, int(round(min(geom.width, geom.height) / 8)))
    fx, fy = {
        MotionClass.RIGHT: (0.85, 0.5),
        MotionClass.LEFT: (0.15, 0.5),
        MotionClass.UP: (0.5, 0.15),
        MotionClass.DOWN: (0.5, 0.85),
    }[cls]
    cx, cy = fx * (geom.width - 1), fy * (geom.height - 1)
    x0, y0 = int(round(cx - side / 2)), int(round(cy - side / 2))
    return x0, y0, x0 + side, y0 + side


def cue_direction(frame, geom: hg.FrameGeometry) -> MotionClass | None:
    """Read the cue back out of a rendered frame: the box whose interior is white."""
    for cls in DIRECTION_ORDER:
        x0, y0, x1, y1 = cue_box(cls, geom)
        if np.all(frame[y0 + 1:y1 - 1, x0 + 1:x1 - 1] >= 0.999):
            return cls
    return None


def _draw_cue(frame, cls, geom):
    x0, y0, x1, y1 = cue_box(cls, geom)
    frame[max(y0 - 1, 0):y1 + 1, max(x0 - 1, 0):x1 + 1] = 0.0
    frame[y0:y1, x0:x1] = 1.0


def truth_deltas(vs, dn, geom) -> np.ndarray:
    """Analytic motion from frame n to n + dn for every n."""
    n = len(vs) - dn
    out = np.empty((max(n, 0), 4, 2))
    for i in range(n):
        out[i] = hg.four_point_from_matrix(np.linalg.inv(vs[i + dn]) @ vs[i], geom)
    return out


def render_sequence(scene: Scene, trajectory: Trajectory, geom: hg.FrameGeometry, dn: int = 1,
                    sigma: float | None = None, inject_object: dict | None = None,
                    photometric_noise: float = 0.0, noise_seed: int = 0, output_size=None,
                    video_id: str = "synth", fps: float = 25.0, backend=None) -> RenderedSequence:
    """Render frames, analytic truth at ``dn`` and motion labels.

    ``inject_object`` = ``{"area": frac, "velocity": (vx, vy), "seed": s}`` pastes a
    rigid textured patch moving independently of the background.
    ``output_size`` = ``(h, w)`` downsamples every frame as it is rendered.
    """
    from .sampling import compute_sigma

    k = get_backend(backend)
    size = scene.size
    vs = viewports(trajectory.steps, geom, size)
    check_viewports(vs, geom, size)
    canvas = np.ascontiguousarray(scene.canvas)

    obj = None
    if inject_object:
        area = float(inject_object.get("area", 0.2))
        if not 0 < area < 1:
            raise ParameterOutOfRange("object area fraction must lie in (0, 1)")
        orng = np.random.default_rng(inject_object.get("seed", 0))
        pw = int(round(np.sqrt(area) * geom.width))
        ph = int(round(np.sqrt(area) * geom.height))
        ov = np.asarray(inject_object.get("velocity", (4.0, 3.0)), dtype=np.float64)
        p0 = np.array([orng.uniform(0, geom.width - pw), orng.uniform(0, geom.height - ph)])
        # texture cut from a canvas region the viewport never shows
        tex_origin = np.array([8.0, 8.0])
        obj = (pw, ph, ov, p0, tex_origin)

    nrng = np.random.default_rng(noise_seed)
    frames = []
    for t, v in enumerate(vs):
        f = k.warp_bilinear(canvas, np.ascontiguousarray(v), geom.height, geom.width, 0.0)
        if obj is not None:
            pw, ph, ov, p0, tex_origin = obj
            pos = p0 + t * ov
            patch = k.warp_bilinear(canvas, hg.translation(*(tex_origin - pos)), geom.height, geom.width, 0.0)
            yy, xx = np.mgrid[0:geom.height, 0:geom.width]
            m = (xx >= pos[0]) & (xx < pos[0] + pw) & (yy >= pos[1]) & (yy < pos[1] + ph)
            f[m] = patch[m]
        if trajectory.cues is not None and trajectory.cues[t] >= 0:
            _draw_cue(f, DIRECTION_ORDER[trajectory.cues[t]], geom)
        if photometric_noise > 0:
            f = np.clip(f + nrng.normal(0.0, photometric_noise, f.shape), 0.0, 1.0)
        if output_size is not None:
            f = downsample(f, output_size).astype(np.float32)
        frames.append(f)

    deltas = truth_deltas(vs, dn, geom)
    truth = MotionTrack(video_id, dn, deltas, fps=fps, width=geom.width, height=geom.height,
                        meta={"kind": trajectory.kind, "seed": int(trajectory.seed)})
    if sigma is None:
        sigma = compute_sigma([truth]) if len(deltas) else 0.0
    sigma_used = max(float(sigma), 1e-6)
    codes = classify_many(deltas, sigma_used, geom) if len(deltas) else []
    labels = [CLASSES[c] for c in codes]
    return RenderedSequence(frames, truth, labels, float(sigma), trajectory.cues)


def video_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index, 7]).generate_state(1)[0])


def render_video(kind: str, index: int, frames: int, seed: int, geom: hg.FrameGeometry,
                 params: dict | None = None, dn: int = 5, canvas_size: int = 1024, output_size=None,
                 inject_object=None, photometric_noise=0.0) -> RenderedSequence:
    """Video ``index`` of a dataset; labels use the video's own sigma until relabelled."""
    s = video_seed(seed, index)
    scene = generate_scene(s, canvas_size)
    traj = generate_trajectory(kind, frames - 1, params, s, geom, canvas_size)
    return render_sequence(scene, traj, geom, dn, inject_object=inject_object,
                           photometric_noise=photometric_noise, noise_seed=s,
                           output_size=output_size, video_id=f"{traj.kind}_{seed}_{index:03d}")


def relabel(seqs, sigma: float, geom: hg.FrameGeometry) -> None:
    for s in seqs:
        s.sigma = sigma
        codes = classify_many(s.truth.deltas, max(sigma, 1e-6), geom) if len(s.truth) else []
        s.labels = [CLASSES[c] for c in codes]


def generate_dataset(kind: str, videos: int, frames: int, seed: int, geom: hg.FrameGeometry,
                     params: dict | None = None, dn: int = 5, canvas_size: int = 1024, output_size=None,
                     threads: int = 1, inject_object=None, photometric_noise=0.0):
    """Render ``videos`` independent sequences of ``frames`` frames each.

    Labels use the dataset-wide sigma of the truth magnitudes.
    """
    from .sampling import compute_sigma

    def one(i):
        return render_video(kind, i, frames, seed, geom, params, dn, canvas_size, output_size,
                            inject_object, photometric_noise)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            seqs = list(pool.map(one, range(videos)))
    else:
        seqs = [one(i) for i in range(videos)]
    relabel(seqs, compute_sigma([s.truth for s in seqs]), geom)
    return seqs
