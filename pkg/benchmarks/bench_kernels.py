"""Time the compiled and numpy kernel backends on the same inputs.

    python3 benchmarks/bench_kernels.py --repeats 5 --out bench.csv
"""
import argparse
import csv
import time

import numpy as np

from homoflow import homography as hg
from homoflow.estimation import detect_corners
from homoflow.evaluation import benchmark_sequence, estimator_suite, run_benchmark
from homoflow.kernels import BACKENDS


def timed(fn, repeats):
    fn()  # warm-up
    t = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        t.append(time.perf_counter() - t0)
    return float(np.mean(t)), float(np.std(t))


def kernel_cases(width, height, seed):
    geom = hg.FrameGeometry(width, height)
    frames = benchmark_sequence(2, seed, geom)
    a, b = (np.ascontiguousarray(f, dtype=np.float64) for f in frames)
    hinv = np.ascontiguousarray(hg.invert(hg.random_homography(np.random.default_rng(seed), geom, 0.05)))
    pts = np.ascontiguousarray(detect_corners(a).astype(np.int64))
    offsets = np.zeros((len(pts), 2))
    return {
        "warp_bilinear": lambda k: k.warp_bilinear(a, hinv, height, width, 0.0),
        "zncc_search": lambda k: k.zncc_search(a, b, pts, 5, 16),
        "lk_refine": lambda k: k.lk_refine(a, b, pts, offsets, 5, 8),
    }


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--width", type=int, default=320)
    p.add_argument("--height", type=int, default=240)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="optional CSV path")
    args = p.parse_args(argv)

    rows = []
    for name, case in kernel_cases(args.width, args.height, args.seed).items():
        for backend in sorted(BACKENDS):
            mean, std = timed(lambda: case(BACKENDS[backend]), args.repeats)
            rows.append({"kernel": name, "backend": backend, "mean_s": mean, "std_s": std})
    seq = benchmark_sequence(15, args.seed, hg.FrameGeometry(args.width, args.height))
    for r in run_benchmark(estimator_suite(), seq, max(args.repeats, 2)):
        rows.append({"kernel": "estimate_track", "backend": r["method"].split("-", 1)[1],
                     "mean_s": r["mean_s"], "std_s": r["std_s"]})

    slowest = {}
    for r in rows:
        slowest[r["kernel"]] = max(slowest.get(r["kernel"], 0.0), r["mean_s"])
    for r in rows:
        r["speedup"] = slowest[r["kernel"]] / r["mean_s"]
        print(f"{r['kernel']:>15s} {r['backend']:>7s} {r['mean_s'] * 1e3:9.2f} ms +- {r['std_s'] * 1e3:7.2f}"
              f"  x{r['speedup']:.1f}")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)


if __name__ == "__main__":
    main()
