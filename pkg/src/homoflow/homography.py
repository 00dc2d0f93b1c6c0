"""Projective homography algebra and the four-point corner parameterization.

Homographies are plain ``(3, 3)`` float arrays acting on homogeneous pixel
coordinates ``(x, y, 1)``. A four-point delta is a ``(4, 2)`` array holding the
forward displacement ``project(G, p_i) - p_i`` of the frame corners, ordered
TL, TR, BR, BL.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import DegenerateConfiguration, DegenerateProjection, Singular

DET_EPS = 1e-12
W_EPS = 1e-12
COND_MAX = 1e10


@dataclass(frozen=True)
class FrameGeometry:
    width: int
    height: int

    def __post_init__(self):
        if self.width < 2 or self.height < 2:
            raise ValueError(f"frame must be at least 2x2, got {self.width}x{self.height}")

    @property
    def corners(self) -> np.ndarray:
        w, h = self.width - 1, self.height - 1
        return np.array([[0.0, 0.0], [w, 0.0], [w, h], [0.0, h]])

    @property
    def center(self) -> np.ndarray:
        return np.array([(self.width - 1) / 2.0, (self.height - 1) / 2.0])

    @property
    def half_extent(self) -> np.ndarray:
        return self.center.copy()

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)


def identity() -> np.ndarray:
    return np.eye(3)


def translation(tx: float, ty: float) -> np.ndarray:
    return np.array([[1.0, 0.0, tx], [0.0, 1.0, ty], [0.0, 0.0, 1.0]])


def scaling(s: float, center=(0.0, 0.0)) -> np.ndarray:
    cx, cy = center
    return translation(cx, cy) @ np.diag([s, s, 1.0]) @ translation(-cx, -cy)


def rotation(theta: float, center=(0.0, 0.0)) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    cx, cy = center
    r = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return translation(cx, cy) @ r @ translation(-cx, -cy)


def normalize(g) -> np.ndarray:
    """Canonical scale: ``g[2, 2] == 1`` when possible, unit Frobenius norm otherwise."""
    g = np.asarray(g, dtype=float)
    if g.shape != (3, 3):
        raise ValueError(f"homography must be 3x3, got {g.shape}")
    if abs(g[2, 2]) > DET_EPS:
        g = g / g[2, 2]
    else:
        g = g / np.linalg.norm(g)
    if abs(np.linalg.det(g)) <= DET_EPS:
        raise Singular("homography is singular")
    return g


def is_degenerate_scale(g) -> bool:
    return abs(np.asarray(g, dtype=float)[2, 2]) <= DET_EPS


def project(g, pts) -> np.ndarray:
    """Project an ``(n, 2)`` array of points; raises on a vanishing w."""
    g = np.asarray(g, dtype=float)
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    x = g[0, 0] * pts[:, 0] + g[0, 1] * pts[:, 1] + g[0, 2]
    y = g[1, 0] * pts[:, 0] + g[1, 1] * pts[:, 1] + g[1, 2]
    w = g[2, 0] * pts[:, 0] + g[2, 1] * pts[:, 1] + g[2, 2]
    if np.any(np.abs(w) <= W_EPS):
        raise DegenerateProjection("point maps to infinity")
    return np.stack([x / w, y / w], axis=1)


def project_point(g, p) -> np.ndarray:
    return project(g, np.asarray(p, dtype=float).reshape(1, 2))[0]


def compose(a, b) -> np.ndarray:
    """``a @ b``: apply ``b`` first, then ``a``."""
    return normalize(np.asarray(a, dtype=float) @ np.asarray(b, dtype=float))


def invert(g) -> np.ndarray:
    g = np.asarray(g, dtype=float)
    # scale-free singularity test
    gn = g / np.linalg.norm(g)
    if abs(np.linalg.det(gn)) <= DET_EPS:
        raise Singular("homography is singular")
    return normalize(np.linalg.inv(g))


def four_point_from_matrix(g, geom: FrameGeometry) -> np.ndarray:
    corners = geom.corners
    return project(g, corners) - corners


def backward_delta(d) -> np.ndarray:
    """Corner displacement with the opposite sign, ``p_i - p'_i``."""
    return -np.asarray(d, dtype=float)


def hartley_transform(pts) -> np.ndarray:
    """Similarity moving the centroid to 0 and the mean distance to sqrt(2)."""
    pts = np.asarray(pts, dtype=float)
    c = pts.mean(axis=0)
    dist = np.sqrt(((pts - c) ** 2).sum(axis=1)).mean()
    if dist < 1e-12:
        raise DegenerateConfiguration("points are coincident")
    s = np.sqrt(2.0) / dist
    return np.array([[s, 0.0, -s * c[0]], [0.0, s, -s * c[1]], [0.0, 0.0, 1.0]])


def _apply_affine(t, pts):
    return pts @ t[:2, :2].T + t[:2, 2]


def fit_dlt(src, dst) -> np.ndarray:
    """Least-squares DLT homography mapping ``src`` onto ``dst`` (both ``(n, 2)``, n >= 4)."""
    src = np.asarray(src, dtype=float).reshape(-1, 2)
    dst = np.asarray(dst, dtype=float).reshape(-1, 2)
    if len(src) != len(dst):
        raise ValueError("src and dst differ in length")
    if len(src) < 4:
        raise DegenerateConfiguration(f"need at least 4 correspondences, got {len(src)}")
    t1 = hartley_transform(src)
    t2 = hartley_transform(dst)
    xs = _apply_affine(t1, src)
    xd = _apply_affine(t2, dst)
    n = len(src)
    a = np.zeros((2 * n, 9))
    x, y = xs[:, 0], xs[:, 1]
    u, v = xd[:, 0], xd[:, 1]
    a[0::2, 0] = x
    a[0::2, 1] = y
    a[0::2, 2] = 1.0
    a[0::2, 6] = -u * x
    a[0::2, 7] = -u * y
    a[0::2, 8] = -u
    a[1::2, 3] = x
    a[1::2, 4] = y
    a[1::2, 5] = 1.0
    a[1::2, 6] = -v * x
    a[1::2, 7] = -v * y
    a[1::2, 8] = -v
    _, s, vt = np.linalg.svd(a)
    # rank 8 is required for a unique null vector
    if s[7] <= 0 or s[0] / s[7] > COND_MAX:
        raise DegenerateConfiguration("correspondence system is rank deficient")
    hn = vt[-1].reshape(3, 3)
    g = np.linalg.inv(t2) @ hn @ t1
    try:
        return normalize(g)
    except Singular as exc:
        raise DegenerateConfiguration("fitted homography is singular") from exc


def _has_collinear_triple(pts, rel_tol=1e-9) -> bool:
    scale = max(np.ptp(pts[:, 0]), np.ptp(pts[:, 1]), 1e-12)
    for i, j, k in combinations(range(len(pts)), 3):
        e1 = pts[j] - pts[i]
        e2 = pts[k] - pts[i]
        if abs(e1[0] * e2[1] - e1[1] * e2[0]) <= rel_tol * scale * scale:
            return True
    return False


def matrix_from_four_point(d, geom: FrameGeometry) -> np.ndarray:
    d = np.asarray(d, dtype=float)
    if d.shape != (4, 2) or not np.all(np.isfinite(d)):
        raise ValueError("four-point delta must be a finite (4, 2) array")
    src = geom.corners
    dst = src + d
    if _has_collinear_triple(dst):
        raise DegenerateConfiguration("three displaced corners are collinear")
    return fit_dlt(src, dst)


def delta_to_list(d) -> list[float]:
    return [float(v) for v in np.asarray(d, dtype=float).reshape(8)]


def delta_from_list(values) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.size != 8:
        raise ValueError(f"four-point delta needs 8 values, got {arr.size}")
    return arr.reshape(4, 2)


def matrix_to_list(g) -> list[float]:
    return [float(v) for v in normalize(g).reshape(9)]


def matrix_from_list(values) -> np.ndarray:
    return normalize(np.asarray(values, dtype=float).reshape(3, 3))


def random_homography(rng: np.random.Generator, geom: FrameGeometry, max_frac: float = 0.25) -> np.ndarray:
    """Random homography whose corner displacements stay within ``max_frac`` of the frame size."""
    lim = np.array([geom.width, geom.height]) * max_frac
    while True:
        d = rng.uniform(-1.0, 1.0, size=(4, 2)) * lim
        try:
            return matrix_from_four_point(d, geom)
        except DegenerateConfiguration:
            continue
