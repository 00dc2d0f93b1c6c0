"""Shared synthetic fixtures for the test-suite."""
import numpy as np

from homoflow import homography as hg
from homoflow.synthetic import Trajectory, render_sequence


def render_pair(scene, g, geom, inject_object=None, noise=0.0, noise_seed=0):
    """Frames (a, b) where b shows a's content moved forward by ``g``."""
    traj = Trajectory("custom", np.asarray(g, dtype=np.float64)[None])
    seq = render_sequence(scene, traj, geom, dn=1, sigma=1.0, inject_object=inject_object,
                          photometric_noise=noise, noise_seed=noise_seed)
    return seq.frames[0], seq.frames[1], seq.truth.deltas[0]


def bounded_homography(rng, geom, max_disp):
    """Random homography whose corners move at most ``max_disp`` px."""
    lim = max_disp / np.sqrt(2.0)
    d = rng.uniform(-lim, lim, (4, 2))
    return hg.matrix_from_four_point(d, geom)


def mean_corner_error(a, b):
    return float(np.sqrt(((np.asarray(a) - np.asarray(b)) ** 2).sum(-1)).mean())
