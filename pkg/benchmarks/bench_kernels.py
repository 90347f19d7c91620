"""Time the hot kernels under both implementations: the numba-compiled
loops and the pure-numpy fallback (the one selected by DRAGKIT_NO_NUMBA=1).

Usage: python benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import math
import time

import numpy as np

from dragkit import _kernels
from dragkit._kernels import (
    bilinear_warp_numpy,
    convex_inside_numpy,
    l1_match_numpy,
)


def timeit(fn, *args, repeats=50):
    fn(*args)  # warm (and compile, for the jitted variants)
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn(*args)
    return (time.perf_counter() - t0) / repeats


def benchmark(repeats: int):
    rng = np.random.default_rng(0)

    # bilinear warp: 256x256 field, rotation + shift
    src = rng.standard_normal((256, 256))
    th = 0.6
    coeffs = (math.cos(th), -math.sin(th), 12.3, math.sin(th), math.cos(th), -4.2)
    warp_args = (src, coeffs, 256, 256)

    # convex interior: 6-gon over a 256x256 block
    ang = np.sort(rng.uniform(0, 2 * math.pi, 6))
    poly_args = (
        np.cos(ang),
        np.sin(ang),
        rng.uniform(-40, 40, 6),
        0,
        0,
        256,
        256,
        1e-9,
    )

    # patch match: 2x128x128 features, 13x13 patch
    feats = rng.standard_normal((2, 128, 128))
    patch = rng.standard_normal((2, 13, 13))
    allowed = np.ones((128, 128), dtype=bool)
    match_args = (feats, patch, allowed)

    cases = [
        ("bilinear_warp 256x256", _kernels.bilinear_warp, bilinear_warp_numpy, warp_args),
        ("convex_inside 256x256", _kernels.convex_inside, convex_inside_numpy, poly_args),
        ("l1_match 128x128 r6", _kernels.l1_match, l1_match_numpy, match_args),
    ]

    active = _kernels.BACKEND
    print(f"active backend: {active} (set {_kernels.ENV_FLAG}=1 to force numpy)\n")
    print(f"{'kernel':<24} {'active':>12} {'numpy':>12} {'speedup':>9}")
    for name, active_fn, numpy_fn, args in cases:
        t_active = timeit(active_fn, *args, repeats=repeats)
        t_numpy = timeit(numpy_fn, *args, repeats=repeats)
        ratio = t_numpy / t_active if t_active > 0 else float("inf")
        print(
            f"{name:<24} {t_active * 1e3:>10.3f}ms {t_numpy * 1e3:>10.3f}ms {ratio:>8.1f}x"
        )

    # agreement spot check on the benchmark inputs
    for name, active_fn, numpy_fn, args in cases:
        a, b = active_fn(*args), numpy_fn(*args)
        finite = np.isfinite(np.asarray(a, dtype=float))
        assert np.allclose(
            np.asarray(a, dtype=float)[finite], np.asarray(b, dtype=float)[finite]
        ), f"{name}: variants disagree"
    print("\nvariants agree on all benchmark inputs")


if __name__ == "__main__":
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=50)
    benchmark(parser.parse_args().repeats)
