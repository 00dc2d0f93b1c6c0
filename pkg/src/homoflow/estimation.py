"""Classical camera-motion estimator: corners, ZNCC patch matching, RANSAC homography.

The dominant planar motion between two frames is returned as a forward
four-point delta. RANSAC separates it from independently moving objects.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage

from . import homography as hg
from .errors import DegenerateConfiguration, HomoflowError, NoConsensus, TooFewFeatures
from ._kernels_py import sym_errors
from .kernels import get_backend
from .track import MotionTrack

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RansacConfig:
    max_iters: int = 2000
    # 2 px lets a projective compromise absorb small moving clusters
    inlier_threshold: float = 1.0
    min_inlier_ratio: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.inlier_threshold <= 0:
            raise ValueError("inlier_threshold must be > 0")
        if not 0 < self.min_inlier_ratio <= 1:
            raise ValueError("min_inlier_ratio must lie in (0, 1]")


@dataclass(frozen=True)
class MatcherConfig:
    max_corners: int = 400
    min_distance: int = 8
    window: int = 11
    search_radius: int = 16
    min_score: float = 0.5
    refine_iters: int = 8


@dataclass
class CorrespondenceSet:
    src: np.ndarray
    dst: np.ndarray
    scores: np.ndarray

    def __post_init__(self):
        self.src = np.asarray(self.src, dtype=np.float64).reshape(-1, 2)
        self.dst = np.asarray(self.dst, dtype=np.float64).reshape(-1, 2)
        self.scores = np.asarray(self.scores, dtype=np.float64).reshape(-1)
        if not len(self.src) == len(self.dst) == len(self.scores):
            raise ValueError("correspondence arrays differ in length")

    def __len__(self):
        return len(self.src)

    def subset(self, mask):
        return CorrespondenceSet(self.src[mask], self.dst[mask], self.scores[mask])


def corner_response(f) -> np.ndarray:
    """Minimum eigenvalue of the 5x5 box-summed structure tensor of Sobel gradients."""
    f = np.asarray(f, dtype=np.float64)
    gx = ndimage.sobel(f, axis=1, mode="nearest") / 8.0
    gy = ndimage.sobel(f, axis=0, mode="nearest") / 8.0
    a = ndimage.uniform_filter(gx * gx, size=5, mode="constant") * 25.0
    b = ndimage.uniform_filter(gx * gy, size=5, mode="constant") * 25.0
    c = ndimage.uniform_filter(gy * gy, size=5, mode="constant") * 25.0
    return 0.5 * (a + c) - np.sqrt(0.25 * (a - c) ** 2 + b * b)


def detect_corners(f, max_count=400, min_distance=8, min_count=8, quality=0.01, border=6) -> np.ndarray:
    """Strongest local maxima of :func:`corner_response` as an ``(k, 2)`` array of (x, y).

    Points are sorted by response, greedily thinned so no two lie closer than
    ``min_distance``, and kept ``border`` pixels away from the frame edge.
    """
    f = np.asarray(f, dtype=np.float64)
    h, w = f.shape
    if h < 16 or w < 16:
        raise ValueError(f"frame must be at least 16x16, got {w}x{h}")
    r = corner_response(f)
    rmax = r.max()
    if rmax <= 1e-10:
        raise TooFewFeatures("frame has no texture")
    peaks = (r == ndimage.maximum_filter(r, size=3, mode="constant", cval=-np.inf)) & (r > quality * rmax)
    peaks[:border] = False
    peaks[h - border:] = False
    peaks[:, :border] = False
    peaks[:, w - border:] = False
    ys, xs = np.nonzero(peaks)
    order = np.argsort(-r[ys, xs], kind="stable")
    ys, xs = ys[order], xs[order]

    taken = np.zeros((h, w), dtype=bool)
    rad = int(np.ceil(min_distance)) - 1
    dy, dx = np.mgrid[-rad:rad + 1, -rad:rad + 1]
    disk = dx * dx + dy * dy < min_distance * min_distance
    dy, dx = dy[disk], dx[disk]
    out = []
    for y, x in zip(ys, xs):
        if taken[y, x]:
            continue
        out.append((x, y))
        if len(out) >= max_count:
            break
        yy, xx = y + dy, x + dx
        ok = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
        taken[yy[ok], xx[ok]] = True
    if len(out) < min_count:
        raise TooFewFeatures(f"found {len(out)} corners, need {min_count}")
    return np.array(out, dtype=np.float64)


def match_patches(a, b, points, window=11, search_radius=16, min_score=0.5, refine_iters=8,
                  backend=None) -> CorrespondenceSet:
    """Best ZNCC match in ``b`` for each point of ``a``, refined to sub-pixel precision."""
    if window < 5 or window % 2 == 0:
        raise ValueError("window must be odd and >= 5")
    if search_radius < 1:
        raise ValueError("search_radius must be >= 1")
    k = get_backend(backend)
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    pts = np.ascontiguousarray(np.rint(np.asarray(points, dtype=np.float64).reshape(-1, 2)), dtype=np.int64)
    half = window // 2
    offsets, scores = k.zncc_search(a, b, pts, half, search_radius)
    keep = scores >= min_score
    pts, offsets, scores = pts[keep], offsets[keep], scores[keep]
    offsets = np.ascontiguousarray(offsets, dtype=np.float64)
    if refine_iters > 0 and len(pts):
        offsets, valid = k.lk_refine(a, b, np.ascontiguousarray(pts), offsets, half, refine_iters)
        pts, offsets, scores = pts[valid], offsets[valid], scores[valid]
    src = pts.astype(np.float64)
    return CorrespondenceSet(src, src + offsets, np.clip(scores, 0.0, 1.0))


def dlt_homography(c: CorrespondenceSet) -> np.ndarray:
    return hg.fit_dlt(c.src, c.dst)


def symmetric_transfer_error(g, src, dst) -> np.ndarray:
    """Per-pair mean of forward and backward reprojection distances, in pixels."""
    g = hg.normalize(g)
    gi = np.linalg.inv(g)
    src = np.asarray(src, dtype=np.float64).reshape(-1, 2)
    dst = np.asarray(dst, dtype=np.float64).reshape(-1, 2)
    return sym_errors(g[None], gi[None], src, dst)[0]


def ransac_homography(c: CorrespondenceSet, cfg: RansacConfig = RansacConfig(), backend=None):
    """Robust homography fit; returns ``(H, inlier_mask)``."""
    n = len(c)
    if n < 8:
        raise NoConsensus(f"need at least 8 correspondences, got {n}")
    rng = np.random.default_rng(cfg.seed)
    samples = np.ascontiguousarray(np.argpartition(rng.random((cfg.max_iters, n)), 4, axis=1)[:, :4])
    try:
        t1 = hg.hartley_transform(c.src)
        t2 = hg.hartley_transform(c.dst)
    except DegenerateConfiguration as exc:
        raise NoConsensus(str(exc)) from exc
    src_n = np.ascontiguousarray(c.src @ t1[:2, :2].T + t1[:2, 2])
    dst_n = np.ascontiguousarray(c.dst @ t2[:2, :2].T + t2[:2, 2])
    k = get_backend(backend)
    best, count, _ = k.ransac_best(src_n, dst_n, t1, np.linalg.inv(t2), c.src, c.dst,
                                   samples, float(cfg.inlier_threshold))
    if best is None or count / n < cfg.min_inlier_ratio:
        raise NoConsensus(f"best hypothesis explains {count}/{n} correspondences")
    g = hg.normalize(best)
    mask = symmetric_transfer_error(g, c.src, c.dst) < cfg.inlier_threshold
    for _ in range(5):
        try:
            g_new = hg.fit_dlt(c.src[mask], c.dst[mask])
        except HomoflowError:
            break
        mask_new = symmetric_transfer_error(g_new, c.src, c.dst) < cfg.inlier_threshold
        if mask_new.sum() < 4:
            break
        g = g_new
        if np.array_equal(mask_new, mask):
            break
        mask = mask_new
    if mask.sum() / n < cfg.min_inlier_ratio:
        raise NoConsensus(f"refined model explains {mask.sum()}/{n} correspondences")
    return g, mask


def estimate_homography(a, b, cfg: RansacConfig = RansacConfig(), matcher: MatcherConfig = MatcherConfig(),
                        backend=None):
    pts = detect_corners(a, matcher.max_corners, matcher.min_distance)
    c = match_patches(a, b, pts, matcher.window, matcher.search_radius, matcher.min_score,
                      matcher.refine_iters, backend=backend)
    return ransac_homography(c, cfg, backend=backend)


def estimate_motion(a, b, cfg: RansacConfig = RansacConfig(), matcher: MatcherConfig = MatcherConfig(),
                    backend=None) -> np.ndarray:
    """Forward four-point delta of the dominant motion from frame ``a`` to frame ``b``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"frame sizes differ: {a.shape} vs {b.shape}")
    g, _ = estimate_homography(a, b, cfg, matcher, backend)
    geom = hg.FrameGeometry(a.shape[1], a.shape[0])
    return hg.four_point_from_matrix(g, geom)


def pair_seed(seed: int, n: int) -> int:
    """Independent per-pair RANSAC seed, so worker scheduling cannot change results."""
    return int(np.random.SeedSequence([seed, n]).generate_state(1, dtype=np.uint64)[0])


def estimate_track(frames, dn=5, cfg: RansacConfig = RansacConfig(), matcher: MatcherConfig = MatcherConfig(),
                   video_id="video", fps=25.0, threads=1, backend=None) -> MotionTrack:
    """Estimate every ``(n, n + dn)`` pair; failures become missing entries."""
    frames = list(frames)
    if len(frames) < dn + 1:
        raise ValueError(f"need at least {dn + 1} frames, got {len(frames)}")
    h, w = np.asarray(frames[0]).shape

    def one(n):
        try:
            return estimate_motion(frames[n], frames[n + dn], replace(cfg, seed=pair_seed(cfg.seed, n)),
                                   matcher, backend)
        except (TooFewFeatures, NoConsensus, DegenerateConfiguration) as exc:
            log.debug("pair %d missing: %s", n, exc)
            return None

    idx = range(len(frames) - dn)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            entries = list(pool.map(one, idx))
    else:
        entries = [one(n) for n in idx]
    return MotionTrack.from_entries(video_id, dn, entries, fps=fps, width=w, height=h)
