"""Sequence-consistent geometric and photometric augmentation.

Geometric transforms are exact pixel permutations; when both frames of a pair
are transformed by ``T`` the inter-frame homography becomes ``T G T^-1``, so
motion targets are conjugated in closed form instead of being re-estimated.
Photometric transforms only ever reach the predictor branch.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import homography as hg
from .errors import ParameterOutOfRange


class GeometricKind(str, Enum):
    IDENTITY = "identity"
    FLIP_H = "flip_h"
    FLIP_V = "flip_v"
    ROTATE_90 = "rotate_90"
    ROTATE_180 = "rotate_180"
    ROTATE_270 = "rotate_270"


class PhotometricKind(str, Enum):
    IDENTITY = "identity"
    GAIN = "gain"
    BIAS = "bias"
    GAMMA = "gamma"
    NOISE = "noise"


# sampling ranges for randomly drawn photometric parameters
PHOTOMETRIC_RANGES = {
    PhotometricKind.GAIN: (0.5, 1.5),
    PhotometricKind.BIAS: (-0.2, 0.2),
    PhotometricKind.GAMMA: (0.5, 2.0),
    PhotometricKind.NOISE: (0.0, 0.05),
}


@dataclass(frozen=True)
class GeometricTransform:
    kind: GeometricKind = GeometricKind.IDENTITY

    def __post_init__(self):
        object.__setattr__(self, "kind", GeometricKind(self.kind))

    @property
    def swaps_axes(self) -> bool:
        return self.kind in (GeometricKind.ROTATE_90, GeometricKind.ROTATE_270)

    def output_geometry(self, geom: hg.FrameGeometry) -> hg.FrameGeometry:
        if self.swaps_axes:
            return hg.FrameGeometry(geom.height, geom.width)
        return geom

    def matrix(self, geom: hg.FrameGeometry) -> np.ndarray:
        """Map from input pixel coordinates to output pixel coordinates."""
        w, h = geom.width - 1.0, geom.height - 1.0
        k = self.kind
        if k is GeometricKind.IDENTITY:
            m = [[1, 0, 0], [0, 1, 0]]
        elif k is GeometricKind.FLIP_H:
            m = [[-1, 0, w], [0, 1, 0]]
        elif k is GeometricKind.FLIP_V:
            m = [[1, 0, 0], [0, -1, h]]
        elif k is GeometricKind.ROTATE_90:
            # np.rot90(k=1): counter-clockwise on screen
            m = [[0, 1, 0], [-1, 0, w]]
        elif k is GeometricKind.ROTATE_180:
            m = [[-1, 0, w], [0, -1, h]]
        else:
            m = [[0, -1, h], [1, 0, 0]]
        return np.array(m + [[0, 0, 1]], dtype=np.float64)

    def apply(self, frame) -> np.ndarray:
        k = self.kind
        f = np.asarray(frame)
        if k is GeometricKind.IDENTITY:
            return f.copy()
        if k is GeometricKind.FLIP_H:
            return f[..., :, ::-1].copy()
        if k is GeometricKind.FLIP_V:
            return f[..., ::-1, :].copy()
        turns = {GeometricKind.ROTATE_90: 1, GeometricKind.ROTATE_180: 2, GeometricKind.ROTATE_270: 3}[k]
        return np.ascontiguousarray(np.rot90(f, turns, axes=(-2, -1)))


@dataclass(frozen=True)
class PhotometricTransform:
    kind: PhotometricKind = PhotometricKind.IDENTITY
    value: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", PhotometricKind(self.kind))
        k, v = self.kind, self.value
        if not np.isfinite(v):
            raise ParameterOutOfRange("photometric parameter must be finite")
        if k in (PhotometricKind.GAIN, PhotometricKind.GAMMA) and v <= 0:
            raise ParameterOutOfRange(f"{k.value} must be > 0, got {v}")
        if k is PhotometricKind.BIAS and abs(v) > 1:
            raise ParameterOutOfRange(f"bias must lie in [-1, 1], got {v}")
        if k is PhotometricKind.NOISE and v < 0:
            raise ParameterOutOfRange(f"noise std must be >= 0, got {v}")


def apply_geometric_sequence(frames, t: GeometricTransform) -> list:
    shapes = {np.shape(f) for f in frames}
    if len(shapes) > 1:
        raise ValueError("frames differ in size")
    return [t.apply(f) for f in frames]


def apply_photometric_sequence(frames, t: PhotometricTransform) -> list:
    """Apply one parameter set to the whole sequence; output clamped to [0, 1]."""
    k, v = t.kind, t.value
    if k is PhotometricKind.IDENTITY:
        return [np.array(f, copy=True) for f in frames]
    rng = np.random.default_rng(t.seed)
    out = []
    for f in frames:
        f = np.asarray(f)
        if k is PhotometricKind.GAIN:
            g = f * v
        elif k is PhotometricKind.BIAS:
            g = f + v
        elif k is PhotometricKind.GAMMA:
            g = np.clip(f, 0.0, 1.0) ** v
        else:
            g = f + rng.normal(0.0, v, f.shape)
        out.append(np.clip(g, 0.0, 1.0).astype(f.dtype, copy=False))
    return out


def conjugate_by_matrix(d, t_mat, geom: hg.FrameGeometry, geom_out: hg.FrameGeometry) -> np.ndarray:
    g = hg.matrix_from_four_point(d, geom)
    g2 = t_mat @ g @ np.linalg.inv(t_mat)
    return hg.four_point_from_matrix(hg.normalize(g2), geom_out)


def conjugate_motion(d, t: GeometricTransform, geom: hg.FrameGeometry) -> np.ndarray:
    """Delta of the same motion seen through ``t``, in the transformed frame's corners."""
    return conjugate_by_matrix(d, t.matrix(geom), geom, t.output_geometry(geom))


def reestimate_motion(a, b, t: GeometricTransform, cfg=None, **kw) -> np.ndarray:
    """Parity path: transform both frames and run the estimator on them."""
    from .estimation import RansacConfig, estimate_motion

    ta, tb = apply_geometric_sequence([a, b], t)
    return estimate_motion(ta, tb, cfg or RansacConfig(), **kw)


def sample_augmentation(seed: int, enable_photometric: bool = True, enable_geometric: bool = True):
    """Uniform transform kinds with parameters uniform in :data:`PHOTOMETRIC_RANGES`."""
    rng = np.random.default_rng(seed)
    geo_kinds = list(GeometricKind)
    gi = int(rng.integers(len(geo_kinds)))
    geo = GeometricTransform(geo_kinds[gi] if enable_geometric else GeometricKind.IDENTITY)
    photo_kinds = list(PhotometricKind)
    kind = photo_kinds[rng.integers(len(photo_kinds))]
    value = 0.0
    if kind in PHOTOMETRIC_RANGES:
        lo, hi = PHOTOMETRIC_RANGES[kind]
        value = float(rng.uniform(lo, hi))
    noise_seed = int(rng.integers(2 ** 31))
    if not enable_photometric:
        return geo, PhotometricTransform()
    return geo, PhotometricTransform(kind, value, noise_seed)
