"""Compare the numba and pure-numpy kernel backends.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Both variants are importable regardless of PITLAB_DISABLE_NUMBA; the flag
only decides which one the library calls.
"""

import argparse
import itertools
import time

import numpy as np

from pitlab import kernels


def _best(fn, repeat):
    fn()  # warm-up (and JIT compile)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(rng):
    x = rng.normal(size=(8, 1024))
    nf = kernels.n_frames(1024, 16, 8)
    inv = 1.0 / kernels.overlap_counts(1024, nf, 16, 8)
    frames = rng.normal(size=(96, nf, 16))
    grad = rng.normal(size=(96, 1024))
    perms3 = np.array(list(itertools.permutations(range(3))), dtype=np.int64)
    mats3 = rng.normal(size=(2000, 3, 3))
    costs = [rng.normal(size=(6, 6)) for _ in range(200)]
    cost = 5.0 * rng.normal(size=(3, 3))
    return {
        "frame_signal 8x1024": lambda v: v["frame_signal"](x, 16, 8, nf),
        "overlap_add 96 frames": lambda v: v["overlap_add"](frames, 8, 1024, inv),
        "overlap_add_adjoint": lambda v: v["overlap_add_adjoint"](grad, nf, 16, 8, inv),
        "batch_exhaustive 2000x3x3": lambda v: v["batch_exhaustive"](mats3, perms3),
        "hungarian 200x6x6": lambda v: [v["hungarian"](c) for c in costs],
        "sinkhorn 3x3, beta 20": lambda v: v["sinkhorn"](cost, 20.0, 50, 1e-10, 20000),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    names = ["frame_signal", "overlap_add", "overlap_add_adjoint", "batch_exhaustive", "hungarian", "sinkhorn"]
    variants = {b: {n: getattr(kernels, f"{n}_{b}") for n in names} for b in ("numba", "numpy")}
    print(f"library backend in use: {kernels.BACKEND}")
    print(f"{'kernel':28s} {'numba ms':>10s} {'numpy ms':>10s} {'speedup':>8s}")
    for label, fn in cases(np.random.default_rng(0)).items():
        t_nb = _best(lambda: fn(variants["numba"]), args.repeat) * 1e3
        t_np = _best(lambda: fn(variants["numpy"]), args.repeat) * 1e3
        print(f"{label:28s} {t_nb:10.3f} {t_np:10.3f} {t_np / t_nb:8.1f}x")


if __name__ == "__main__":
    main()
