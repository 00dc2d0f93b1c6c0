import numpy as np
import pytest

from homoflow import homography as hg
from homoflow import synthetic as sy
from homoflow.errors import ParameterOutOfRange, ViewportEscape
from homoflow.estimation import detect_corners
from homoflow.motion import MotionClass

G = hg.FrameGeometry(128, 96)


def test_scene_deterministic_and_textured():
    a, b = sy.generate_scene(4, 512), sy.generate_scene(4, 512)
    assert np.array_equal(a.canvas, b.canvas)
    assert not np.array_equal(a.canvas, sy.generate_scene(5, 512).canvas)
    assert 0.0 <= a.canvas.min() and a.canvas.max() <= 1.0
    crop = a.canvas[100:340, 100:420]
    assert len(detect_corners(crop)) >= 200
    with pytest.raises(ParameterOutOfRange):
        sy.generate_scene(0, 256)


@pytest.mark.parametrize("kind", ["constant_velocity", "linear_acceleration", "piecewise", "cue",
                                  "random_projective", "ConstantVelocity", "la"])
def test_trajectory_kinds(kind):
    t = sy.generate_trajectory(kind, 15, seed=1, geom=G, canvas_size=1024)
    assert t.steps.shape == (15, 3, 3)
    again = sy.generate_trajectory(kind, 15, seed=1, geom=G, canvas_size=1024)
    assert np.array_equal(t.steps, again.steps)
    assert all(sy._step_displacement(g, G) <= sy.MAX_STEP_DISPLACEMENT for g in t.steps)


def test_trajectory_examples():
    cv = sy.generate_trajectory("cv", 3, {"velocity": (1.5, -2.0)}, geom=G)
    assert np.allclose(cv.steps[:, :2, 2], [[1.5, -2.0]] * 3)
    la = sy.generate_trajectory("la", 3, {"velocity": (0, 0), "acceleration": (1, 0)}, geom=G)
    assert np.allclose(la.steps[:, 0, 2], [1, 2, 3])
    pw = sy.generate_trajectory("piecewise", 6, {"switches": [2, 4], "velocities": [(1, 0), (0, 1)]}, geom=G)
    assert np.allclose(pw.steps[:, :2, 2], [[1, 0], [1, 0], [0, 1], [0, 1], [1, 0], [1, 0]])
    with pytest.raises(ParameterOutOfRange):
        sy.generate_trajectory("spiral", 3)
    with pytest.raises(ParameterOutOfRange):
        sy.generate_trajectory("cv", 3, {"velocity": (30.0, 0.0)}, geom=G)


def test_viewport_escape():
    with pytest.raises(ViewportEscape):
        sy.generate_trajectory("cv", 400, {"velocity": (5.0, 0.0)}, geom=G, canvas_size=1024)
    scene = sy.generate_scene(0, 512)
    traj = sy.generate_trajectory("cv", 200, {"velocity": (5.0, 0.0)}, geom=G)
    with pytest.raises(ViewportEscape):
        sy.render_sequence(scene, traj, G)


def test_cue_rule_replay():
    seq = sy.render_video("cue", 0, 300, 3, G, dn=1)
    traj = sy.generate_trajectory("cue", 299, None, sy.video_seed(3, 0), G, 1024)
    shown = [sy.cue_direction(f, G) for f in seq.frames]
    expect = [None if c < 0 else sy.DIRECTION_ORDER[c] for c in traj.cues]
    assert shown == expect
    vel = traj.steps[:, :2, 2]
    moving = np.flatnonzero(np.abs(vel).sum(axis=1) > 0)
    assert len(moving) > 0
    for t in moving:
        cls = shown[t]
        assert cls is not None
        assert np.allclose(np.sign(vel[t]), sy.DIRECTIONS[cls])
    # every burst is announced before it starts
    starts = [t for t in moving if t == 0 or t - 1 not in set(moving)]
    assert all(t > 0 and shown[t - 1] is not None for t in starts)


def test_truth_composes_over_dn():
    scene = sy.generate_scene(1, 512)
    traj = sy.generate_trajectory("random_projective", 12, {"max_displacement": 2.0}, 2, G)
    seq = sy.render_sequence(scene, traj, G, dn=5)
    for n in range(len(seq.truth.deltas)):
        g = np.eye(3)
        for t in range(n, n + 5):
            g = traj.steps[t] @ g
        assert np.allclose(seq.truth.deltas[n], hg.four_point_from_matrix(g, G), atol=1e-8)


def test_static_trajectory_is_static():
    scene = sy.generate_scene(1, 512)
    seq = sy.render_sequence(scene, sy.generate_trajectory("cv", 10, {"velocity": (0, 0)}, geom=G), G, dn=5)
    assert np.allclose(seq.truth.deltas, 0)
    assert all(l is MotionClass.STATIC for l in seq.labels)
    assert all(np.array_equal(seq.frames[0], f) for f in seq.frames)


def test_label_fidelity_on_cue_video():
    seqs = sy.generate_dataset("cue", 2, 300, 0, G, dn=5)
    checked = 0
    for s in seqs:
        d = s.truth.deltas
        for n, lab in enumerate(s.labels):
            shift = d[n].mean(axis=0)
            if np.linalg.norm(shift) >= 10.0 - 1e-9 and np.all(np.isclose(d[n], shift)):
                want = [c for c, v in sy.DIRECTIONS.items() if np.allclose(np.sign(shift), v)]
                if want:
                    assert lab is want[0]
                    checked += 1
        assert len(s.labels) == len(d)
    assert checked > 30
    assert seqs[0].truth.video_id == "cue_0_000"


def test_dataset_deterministic_across_threads():
    a = sy.generate_dataset("random_projective", 3, 8, 5, G, dn=2, output_size=(24, 32))
    b = sy.generate_dataset("random_projective", 3, 8, 5, G, dn=2, output_size=(24, 32), threads=3)
    for x, y in zip(a, b):
        assert all(np.array_equal(f, g) for f, g in zip(x.frames, y.frames))
        assert x.frames[0].shape == (24, 32)
        assert np.array_equal(x.truth.deltas, y.truth.deltas)
        assert x.labels == y.labels
