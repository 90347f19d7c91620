"""The numba and numpy kernel variants must agree."""

import numpy as np

from dragkit import _kernels
from dragkit._kernels import (
    _bilinear_warp_loop,
    _convex_inside_loop,
    _l1_match_loop,
    bilinear_warp_numpy,
    convex_inside_numpy,
    l1_match_numpy,
)


def test_backend_selected():
    assert _kernels.BACKEND in ("numba", "numpy")


def test_bilinear_agreement():
    rng = np.random.default_rng(0)
    for _ in range(10):
        src = rng.standard_normal((17, 23))
        th = rng.uniform(-np.pi, np.pi)
        coeffs = (
            np.cos(th),
            -np.sin(th),
            rng.uniform(-3, 3),
            np.sin(th),
            np.cos(th),
            rng.uniform(-3, 3),
        )
        a = _bilinear_warp_loop(src, coeffs, 17, 23)
        b = bilinear_warp_numpy(src, coeffs, 17, 23)
        c = _kernels.bilinear_warp(src, coeffs, 17, 23)
        assert np.array_equal(a, b)
        assert np.array_equal(a, c)


def test_convex_inside_agreement():
    rng = np.random.default_rng(1)
    for _ in range(10):
        n = rng.integers(3, 7)
        ang = np.sort(rng.uniform(0, 2 * np.pi, n))
        nx, ny = np.cos(ang), np.sin(ang)
        off = rng.uniform(-5, 5, n)
        args = (nx, ny, off, 0, 0, 20, 20, 1e-9)
        a = _convex_inside_loop(*args)
        b = convex_inside_numpy(*args)
        c = _kernels.convex_inside(*args)
        assert np.array_equal(a, b)
        assert np.array_equal(a, c)


def test_l1_match_agreement():
    rng = np.random.default_rng(2)
    feats = rng.standard_normal((2, 16, 18))
    patch = rng.standard_normal((2, 5, 5))
    allowed = rng.random((16, 18)) > 0.3
    a = _l1_match_loop(feats, patch, allowed)
    b = l1_match_numpy(feats, patch, allowed)
    c = _kernels.l1_match(feats, patch, allowed)
    finite = np.isfinite(a)
    assert np.array_equal(finite, np.isfinite(b))
    assert np.array_equal(finite, np.isfinite(c))
    assert np.allclose(a[finite], b[finite], atol=1e-12)
    assert np.allclose(a[finite], c[finite], atol=1e-12)
    # the minimizer must agree between variants
    assert np.unravel_index(np.argmin(a), a.shape) == np.unravel_index(
        np.argmin(b), b.shape
    )
