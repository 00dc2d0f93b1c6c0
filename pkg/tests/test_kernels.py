"""Compiled and numpy kernel backends must agree."""
from pathlib import Path

import numpy as np
import pytest

from homoflow import homography as hg
from homoflow import kernels
from homoflow.estimation import RansacConfig, detect_corners, estimate_motion, match_patches, ransac_homography

from helpers import bounded_homography, render_pair

G = hg.FrameGeometry(160, 120)
needs_compiled = pytest.mark.skipif("cython" not in kernels.BACKENDS, reason="extension not built")


def test_backend_selection(monkeypatch):
    assert kernels.get_backend("python") is kernels.BACKENDS["python"]
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")
    monkeypatch.setenv("HOMOFLOW_KERNELS", "python")
    assert kernels.get_backend() is kernels.BACKENDS["python"]


def test_python_warp_matches_long_hand():
    src = np.arange(30.0).reshape(5, 6)
    k = kernels.BACKENDS["python"]
    out = k.warp_bilinear(src, hg.translation(0.5, 0.25), 5, 6, -1.0)
    # out(x, y) = src(x + 0.5, y + 0.25)
    x, y = 2, 1
    v = (0.75 * (0.5 * src[1, 2] + 0.5 * src[1, 3]) + 0.25 * (0.5 * src[2, 2] + 0.5 * src[2, 3]))
    assert out[y, x] == pytest.approx(v)
    assert out[4, 5] == -1.0


@needs_compiled
def test_warp_equivalent(scene, rng):
    c, p = kernels.BACKENDS["cython"], kernels.BACKENDS["python"]
    canvas = np.ascontiguousarray(scene.canvas[:300, :300])
    for _ in range(5):
        h = np.ascontiguousarray(hg.invert(hg.random_homography(rng, G, 0.2)) @ hg.translation(-50, -40))
        assert np.allclose(c.warp_bilinear(canvas, h, 120, 160, 0.0), p.warp_bilinear(canvas, h, 120, 160, 0.0),
                           atol=1e-12)


@needs_compiled
def test_matching_equivalent(scene, rng):
    g = bounded_homography(rng, G, 8.0)
    a, b, _ = render_pair(scene, g, G)
    pts = detect_corners(a)
    mc = match_patches(a, b, pts, backend="cython")
    mp = match_patches(a, b, pts, backend="python")
    assert np.array_equal(mc.src, mp.src)
    assert np.allclose(mc.dst, mp.dst, atol=1e-9)
    assert np.allclose(mc.scores, mp.scores, atol=1e-12)


@needs_compiled
def test_ransac_and_estimate_equivalent(scene, rng):
    g = bounded_homography(rng, G, 8.0)
    a, b, _ = render_pair(scene, g, G)
    c = match_patches(a, b, detect_corners(a))
    gc, mc = ransac_homography(c, RansacConfig(seed=5), backend="cython")
    gp, mp = ransac_homography(c, RansacConfig(seed=5), backend="python")
    assert np.array_equal(mc, mp)
    assert np.allclose(gc, gp, atol=1e-9)
    assert np.allclose(estimate_motion(a, b, backend="cython"), estimate_motion(a, b, backend="python"), atol=1e-7)


def test_benchmark_script_runs(tmp_path):
    import runpy

    mod = runpy.run_path(str(Path(__file__).resolve().parents[1] / "benchmarks" / "bench_kernels.py"))
    out = tmp_path / "b.csv"
    mod["main"](["--repeats", "2", "--width", "96", "--height", "72", "--out", str(out)])
    lines = out.read_text().splitlines()
    assert lines[0] == "kernel,backend,mean_s,std_s,speedup"
    assert len(lines) == 1 + 4 * len(kernels.BACKENDS)
