import math
from pathlib import Path

import numpy as np
import pytest

from dragkit import _kernels
from dragkit.geometry import Mask2D, Point2

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    # compile the jit kernels once so timed tests measure the algorithms
    _kernels.warm_up()


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


def ellipse_mask(cx, cy, a, b, theta, width=64, height=64) -> Mask2D:
    ys, xs = np.mgrid[0:height, 0:width]
    dx, dy = xs - cx, ys - cy
    u = dx * math.cos(theta) + dy * math.sin(theta)
    v = -dx * math.sin(theta) + dy * math.cos(theta)
    return Mask2D((u / a) ** 2 + (v / b) ** 2 <= 1.0)


def roundtrip_blob(rng, lo=16.0, hi=21.0, margin=6.5, width=64, height=64) -> Mask2D:
    """Large smooth convex blob for resampling round-trip tests: compact
    enough to stay on-grid under the test transforms, big enough that
    boundary re-rasterization noise stays under 2% of the area."""
    a = rng.uniform(lo, hi)
    b = rng.uniform(lo, hi)
    m = max(a, b) + margin
    cx = rng.uniform(m, width - m)
    cy = rng.uniform(m, height - m)
    return ellipse_mask(cx, cy, a, b, rng.uniform(0, math.pi), width, height)


def small_blob(rng, width=64, height=64, margin=18) -> Mask2D:
    """Generic blob with bounding box at least 8x8, kept off the borders."""
    a = rng.uniform(4.5, 8.0)
    b = rng.uniform(4.5, 8.0)
    cx = rng.uniform(margin, width - margin)
    cy = rng.uniform(margin, height - margin)
    return ellipse_mask(cx, cy, a, b, rng.uniform(0, math.pi), width, height)


def disk_mask(cx, cy, radius, width=64, height=64) -> Mask2D:
    ys, xs = np.mgrid[0:height, 0:width]
    return Mask2D((xs - cx) ** 2 + (ys - cy) ** 2 <= radius**2)


def square_mask(x0, y0, side, width=16, height=16) -> Mask2D:
    bits = np.zeros((height, width), dtype=bool)
    bits[y0 : y0 + side, x0 : x0 + side] = True
    return Mask2D(bits)


def p(x, y) -> Point2:
    return Point2(float(x), float(y))
