"""Time the numba kernels against the numpy fallback on identical inputs.

    python benchmarks/bench_kernels.py [--paths 2000] [--repeat 3]

Each row checks that both backends return the same result before timing.
"""
import argparse
import math
import time

import numpy as np

from sdesim._backend import get_kernels
from sdesim.levy import rw_tail_coef


def best_of(fn, repeat):
    best = math.inf
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def cases(P):
    ids = np.arange(P)
    h = 2.0 ** -6
    rs = np.random.default_rng(0)
    dw1 = math.sqrt(h) * rs.standard_normal((P, 64))
    dw2 = math.sqrt(h) * rs.standard_normal((P, 64))
    return {
        "raw words (P x 4096)": lambda k: k.raw_u64(7, ids, 0, 0, 4096),
        "polar normals (P x 4096)": lambda k: k.normals_polar(7, ids, 0, 0, 4096)[0],
        "box-muller (P x 4096)": lambda k: k.normals_box_muller(7, ids, 0, 0, 4096)[0],
        "KL areas (64 steps, Q=64)": lambda k: k.kl_areas(7, ids, 2, dw1, dw2, h, 64),
        "RW areas (64 steps, Q=8)": lambda k: k.rw_areas(7, ids, 3, dw1, dw2, h, 8,
                                                        rw_tail_coef(h, 8)),
        "heston FT (64 steps)": lambda k: k.heston_ft(dw1, dw2, h, 0.05, 2.0, 0.09, 0.1, 0.5,
                                                      1.0, 0.09),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--paths", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    nb, npy = get_kernels("numba"), get_kernels("numpy")
    print(f"{'kernel':28s} {'numpy s':>10s} {'numba s':>10s} {'speedup':>8s}  max|diff|")
    for name, fn in cases(args.paths).items():
        a, b = fn(npy), fn(nb)  # also triggers compilation
        diff = float(np.max(np.abs(a.astype(float) - b.astype(float))))
        t_np = best_of(lambda: fn(npy), args.repeat)
        t_nb = best_of(lambda: fn(nb), args.repeat)
        print(f"{name:28s} {t_np:10.4f} {t_nb:10.4f} {t_np / t_nb:8.1f}  {diff:.1e}")


if __name__ == "__main__":
    main()
