import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from homoflow import homography as hg
from homoflow.errors import EmptyTrack
from homoflow.motion import (CLASSES, MotionClass, classify, classify_many, distribution, mirror_class,
                             mirror_delta, motion_magnitude, write_distribution)
from homoflow.track import MotionTrack

G = hg.FrameGeometry(320, 240)
deltas = arrays(np.float64, (4, 2), elements=st.floats(-30, 30))


def pure(cls, s=5.0, geom=G):
    """A delta that is a clean example of ``cls``."""
    c = geom.center
    r = geom.corners - c
    if cls is MotionClass.RIGHT:
        return np.tile([s, 0.0], (4, 1))
    if cls is MotionClass.LEFT:
        return np.tile([-s, 0.0], (4, 1))
    if cls is MotionClass.UP:
        return np.tile([0.0, -s], (4, 1))
    if cls is MotionClass.DOWN:
        return np.tile([0.0, s], (4, 1))
    if cls is MotionClass.ZOOM_IN:
        return -0.05 * r
    if cls is MotionClass.ZOOM_OUT:
        return 0.05 * r
    theta = 0.05 if cls is MotionClass.ROTATE_RIGHT else -0.05
    return hg.four_point_from_matrix(hg.rotation(theta, c), geom)


def test_magnitude_examples():
    assert motion_magnitude(np.zeros((4, 2))) == 0
    assert motion_magnitude(np.tile([3.0, 4.0], (4, 1))) == 5.0
    assert motion_magnitude(np.array([[1.0, 0], [0, 1], [-1, 0], [0, -1]])) == 1.0
    assert motion_magnitude(np.zeros((3, 4, 2))).shape == (3,)


def test_classify_examples():
    assert classify(np.zeros((4, 2)), 1.0, G) is MotionClass.STATIC
    assert classify(np.tile([5.0, 0.0], (4, 1)), 1.0, G) is MotionClass.RIGHT
    d = 0.1 * (G.center - G.corners)
    assert classify(d, 1e-3, G) is MotionClass.ZOOM_IN
    with pytest.raises(ValueError):
        classify(d, 0.0, G)


def test_rotation_sense_on_screen():
    # image y points down, so a positive angle turns content clockwise on screen
    d = hg.four_point_from_matrix(hg.rotation(0.05, G.center), G)
    assert classify(d, 1e-3, G) is MotionClass.ROTATE_RIGHT
    d = hg.four_point_from_matrix(hg.rotation(-0.05, G.center), G)
    assert classify(d, 1e-3, G) is MotionClass.ROTATE_LEFT


@pytest.mark.parametrize("cls", [c for c in CLASSES if c not in (MotionClass.MIXED, MotionClass.STATIC)])
def test_pure_classes(cls):
    assert classify(pure(cls), 1e-3, G) is cls


def test_mixed():
    d = np.array([[5.0, 0], [-5, 0], [0, 5], [0, -5]])
    assert classify(d, 1e-3, G) is MotionClass.MIXED


def test_static_takes_precedence():
    assert classify(pure(MotionClass.RIGHT, 0.5), 1.0, G) is MotionClass.STATIC


@given(deltas, st.floats(0.1, 10))
def test_scaling_below_sigma_is_static(d, sigma):
    m = motion_magnitude(d)
    if m == 0:
        return
    alpha = 0.999 * sigma / m
    assert classify(alpha * d, sigma, G) is MotionClass.STATIC


@given(deltas)
def test_mirror_equivariance(d):
    assert classify(mirror_delta(d), 0.5, G) is mirror_class(classify(d, 0.5, G))


def test_mirror_map():
    assert mirror_class(MotionClass.LEFT) is MotionClass.RIGHT
    assert mirror_class(MotionClass.ROTATE_RIGHT) is MotionClass.ROTATE_LEFT
    for c in (MotionClass.UP, MotionClass.DOWN, MotionClass.ZOOM_IN, MotionClass.ZOOM_OUT,
              MotionClass.STATIC, MotionClass.MIXED):
        assert mirror_class(c) is c
    d = np.arange(8.0).reshape(4, 2)
    assert np.array_equal(mirror_delta(mirror_delta(d)), d)


def test_total_function_fuzz():
    rng = np.random.default_rng(0)
    d = rng.normal(0, 5, (10 ** 6, 4, 2))
    codes = classify_many(d, 2.0, G)
    assert codes.shape == (10 ** 6,)
    assert codes.min() >= 0 and codes.max() < len(CLASSES)


def test_classify_many_matches_scalar(rng):
    d = rng.normal(0, 5, (200, 4, 2))
    assert [CLASSES[c] for c in classify_many(d, 2.0, G)] == [classify(x, 2.0, G) for x in d]


def test_distribution_by_construction(tmp_path):
    d = np.concatenate([np.tile(pure(MotionClass.RIGHT), (30, 1, 1)),
                        np.tile(pure(MotionClass.ZOOM_IN), (20, 1, 1)),
                        np.zeros((50, 4, 2))])
    d = np.concatenate([d, np.full((5, 4, 2), np.nan)])
    t = MotionTrack("v", 5, d, width=320, height=240)
    dist = distribution(t, 1.0)
    fr = dist.fractions()
    assert dist.total == 100 and dist.missing == 5
    assert fr[MotionClass.RIGHT] == 0.30 and fr[MotionClass.ZOOM_IN] == 0.20 and fr[MotionClass.STATIC] == 0.50
    assert abs(sum(fr.values()) - 1) <= 1e-12
    assert sum(dist.counts.values()) == dist.total
    write_distribution(tmp_path, dist)
    data = json.loads((tmp_path / "distribution.json").read_text())
    # ten classes in the report, as in the published breakdown
    assert set(data["classes"]) == {"up", "down", "left", "right", "zoom_in", "zoom_out", "rotate_left",
                                    "rotate_right", "mixed", "static"}
    assert (tmp_path / "distribution.csv").read_text().count("\n") == 11
    assert (tmp_path / "distribution.svg").exists()


def test_distribution_all_zero_and_empty():
    t = MotionTrack("v", 1, np.zeros((10, 4, 2)), width=320, height=240)
    assert distribution(t, 1.0).fractions()[MotionClass.STATIC] == 1.0
    with pytest.raises(EmptyTrack):
        distribution(MotionTrack("v", 1, np.zeros((0, 4, 2)), width=320, height=240), 1.0)
