"""Hot numeric kernels: numba-compiled loops with a pure-numpy fallback.

Every kernel exists in two variants that compute identical results:
``*_numpy`` (vectorized) and a numba ``@njit`` build of the scalar loop.
The active variant is chosen once at import time; set ``DRAGKIT_NO_NUMBA=1``
to force the numpy path (or it is used automatically when numba is missing).
``benchmarks/bench_kernels.py`` times both variants side by side.
"""

from __future__ import annotations

import os

import numpy as np

ENV_FLAG = "DRAGKIT_NO_NUMBA"


def _numba_requested() -> bool:
    return os.environ.get(ENV_FLAG, "0") != "1"


NUMBA_ENABLED = False
if _numba_requested():
    try:
        from numba import njit

        NUMBA_ENABLED = True
    except ImportError:
        NUMBA_ENABLED = False


# ---------------------------------------------------------------------------
# bilinear pull-warp of a single 2D field
#
# For each output cell (x, y) the source is sampled at the inverse-mapped
# position (a*x + b*y + c, d*x + e*y + f); samples outside the grid read 0.
# The interpolation expression is written identically in both variants so
# results match bit for bit.
# ---------------------------------------------------------------------------


def _bilinear_warp_loop(src, coeffs, out_h, out_w):
    a, b, c, d, e, f = coeffs
    h, w = src.shape
    out = np.zeros((out_h, out_w), dtype=np.float64)
    for y in range(out_h):
        for x in range(out_w):
            sx = a * x + b * y + c
            sy = d * x + e * y + f
            x0 = int(np.floor(sx))
            y0 = int(np.floor(sy))
            fx = sx - x0
            fy = sy - y0
            v00 = src[y0, x0] if 0 <= x0 < w and 0 <= y0 < h else 0.0
            v10 = src[y0, x0 + 1] if 0 <= x0 + 1 < w and 0 <= y0 < h else 0.0
            v01 = src[y0 + 1, x0] if 0 <= x0 < w and 0 <= y0 + 1 < h else 0.0
            v11 = (
                src[y0 + 1, x0 + 1]
                if 0 <= x0 + 1 < w and 0 <= y0 + 1 < h
                else 0.0
            )
            out[y, x] = (1.0 - fy) * ((1.0 - fx) * v00 + fx * v10) + fy * (
                (1.0 - fx) * v01 + fx * v11
            )
    return out


def bilinear_warp_numpy(src, coeffs, out_h, out_w):
    a, b, c, d, e, f = coeffs
    h, w = src.shape
    ys, xs = np.mgrid[0:out_h, 0:out_w].astype(np.float64)
    sx = a * xs + b * ys + c
    sy = d * xs + e * ys + f
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    fx = sx - x0
    fy = sy - y0

    def gather(xi, yi):
        valid = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
        vals = np.zeros_like(sx)
        vals[valid] = src[yi[valid], xi[valid]]
        return vals

    v00 = gather(x0, y0)
    v10 = gather(x0 + 1, y0)
    v01 = gather(x0, y0 + 1)
    v11 = gather(x0 + 1, y0 + 1)
    return (1.0 - fy) * ((1.0 - fx) * v00 + fx * v10) + fy * (
        (1.0 - fx) * v01 + fx * v11
    )


# ---------------------------------------------------------------------------
# convex polygon interior test over a block of cell centers
#
# Edges are given by unit normals pointing into the polygon plus offsets;
# a center is inside when nx*x + ny*y >= off - tol for every edge.
# ---------------------------------------------------------------------------


def _convex_inside_loop(nx, ny, off, x0, y0, bw, bh, tol):
    m = nx.shape[0]
    out = np.zeros((bh, bw), dtype=np.bool_)
    for j in range(bh):
        for i in range(bw):
            px = float(x0 + i)
            py = float(y0 + j)
            inside = True
            for e in range(m):
                if nx[e] * px + ny[e] * py < off[e] - tol:
                    inside = False
                    break
            out[j, i] = inside
    return out


def convex_inside_numpy(nx, ny, off, x0, y0, bw, bh, tol):
    ys, xs = np.mgrid[y0 : y0 + bh, x0 : x0 + bw].astype(np.float64)
    inside = np.ones((bh, bw), dtype=np.bool_)
    for e in range(nx.shape[0]):
        inside &= nx[e] * xs + ny[e] * ys >= off[e] - tol
    return inside


# ---------------------------------------------------------------------------
# L1 patch-distance map
#
# For every allowed center (y, x) with the full patch in bounds, sum the
# absolute difference between feats[:, y-ry:y+ry+1, x-rx:x+rx+1] and patch.
# Disallowed or out-of-bounds centers get +inf.
# ---------------------------------------------------------------------------


def _l1_match_loop(feats, patch, allowed):
    c, h, w = feats.shape
    ph, pw = patch.shape[1], patch.shape[2]
    ry, rx = ph // 2, pw // 2
    out = np.full((h, w), np.inf, dtype=np.float64)
    for y in range(ry, h - ry):
        for x in range(rx, w - rx):
            if not allowed[y, x]:
                continue
            s = 0.0
            for ch in range(c):
                for dy in range(ph):
                    for dx in range(pw):
                        s += abs(
                            feats[ch, y - ry + dy, x - rx + dx]
                            - patch[ch, dy, dx]
                        )
            out[y, x] = s
    return out


def l1_match_numpy(feats, patch, allowed):
    c, h, w = feats.shape
    ph, pw = patch.shape[1], patch.shape[2]
    ry, rx = ph // 2, pw // 2
    out = np.full((h, w), np.inf, dtype=np.float64)
    if h - ph + 1 <= 0 or w - pw + 1 <= 0:
        return out
    windows = np.lib.stride_tricks.sliding_window_view(feats, (ph, pw), axis=(1, 2))
    # windows: (c, h-ph+1, w-pw+1, ph, pw)
    dist = np.abs(windows - patch[:, None, None, :, :]).sum(axis=(0, 3, 4))
    block = out[ry : h - ry, rx : w - rx]
    valid = allowed[ry : h - ry, rx : w - rx]
    block[valid] = dist[valid]
    return out


if NUMBA_ENABLED:
    bilinear_warp = njit(cache=True)(_bilinear_warp_loop)
    convex_inside = njit(cache=True)(_convex_inside_loop)
    l1_match = njit(cache=True)(_l1_match_loop)
    BACKEND = "numba"
else:
    bilinear_warp = bilinear_warp_numpy
    convex_inside = convex_inside_numpy
    l1_match = l1_match_numpy
    BACKEND = "numpy"


def warm_up():
    """Trigger JIT compilation of all kernels on tiny inputs."""
    src = np.zeros((2, 2), dtype=np.float64)
    bilinear_warp(src, (1.0, 0.0, 0.0, 0.0, 1.0, 0.0), 2, 2)
    convex_inside(
        np.array([1.0]), np.array([0.0]), np.array([0.0]), 0, 0, 2, 2, 1e-9
    )
    l1_match(
        np.zeros((1, 3, 3)), np.zeros((1, 1, 1)), np.ones((3, 3), dtype=np.bool_)
    )
