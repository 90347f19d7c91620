"""Planar geometry on the latent/image grid.

Coordinate convention: x grows rightward, y grows downward (image
convention). Cell (x, y) of a mask has its center at exactly (x, y), and
all point-in-region tests are evaluated against cell centers. Rotation
angles are stored in the usual math convention, which on a y-down screen
makes positive angles appear clockwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from PIL import Image

from . import _kernels

# signed-distance tolerance (in cells) for "on the boundary" tests
EDGE_TOL = 1e-9


class GeometryError(ValueError):
    """Base class for geometry failures."""


class SingularTransformError(GeometryError):
    """The affine transform cannot be inverted."""


class EmptyRegionError(GeometryError):
    """An operation that needs set cells was given an empty mask."""


class ConvexityError(GeometryError):
    """Polygon vertices do not describe a convex polygon."""


class Point2(NamedTuple):
    x: float
    y: float

    def __add__(self, other):  # type: ignore[override]
        return Point2(self.x + other[0], self.y + other[1])

    def __sub__(self, other):
        return Point2(self.x - other[0], self.y - other[1])

    def dist(self, other: "Point2") -> float:
        return math.hypot(self.x - other[0], self.y - other[1])


class RotatedRect(NamedTuple):
    center: Point2
    size: tuple[float, float]
    angle_deg: float  # in [0, 90)


@dataclass(frozen=True)
class Mask2D:
    """Binary mask stored as a read-only bool array of shape (height, width)."""

    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=bool)
        if bits.ndim != 2 or bits.shape[0] < 1 or bits.shape[1] < 1:
            raise GeometryError("mask must be a 2D grid with positive dimensions")
        bits = np.ascontiguousarray(bits)
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def count(self) -> int:
        return int(self.bits.sum())

    @classmethod
    def zeros(cls, width: int, height: int) -> "Mask2D":
        return cls(np.zeros((height, width), dtype=bool))

    @classmethod
    def from_cells(cls, width: int, height: int, cells: Sequence[tuple[int, int]]) -> "Mask2D":
        bits = np.zeros((height, width), dtype=bool)
        for x, y in cells:
            bits[y, x] = True
        return cls(bits)

    def cells(self) -> list[Point2]:
        """Set-cell centers as points, row-major order."""
        ys, xs = np.nonzero(self.bits)
        return [Point2(float(x), float(y)) for x, y in zip(xs, ys)]

    def __eq__(self, other) -> bool:
        return isinstance(other, Mask2D) and np.array_equal(self.bits, other.bits)

    def __hash__(self):
        return hash((self.bits.shape, self.bits.tobytes()))


@dataclass(frozen=True)
class AffineTransform:
    """Homogeneous 3x3 transform; the last row is always (0, 0, 1)."""

    m: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        m = np.asarray(self.m, dtype=np.float64)
        if m.shape != (3, 3):
            raise GeometryError("affine matrix must be 3x3")
        if not np.all(np.isfinite(m)):
            raise GeometryError("affine matrix must be finite")
        if not np.array_equal(m[2], [0.0, 0.0, 1.0]):
            raise GeometryError("last row of an affine matrix must be (0, 0, 1)")
        m = np.ascontiguousarray(m)
        m.setflags(write=False)
        object.__setattr__(self, "m", m)

    def apply(self, p: Point2) -> Point2:
        v = self.m @ np.array([p[0], p[1], 1.0])
        return Point2(float(v[0]), float(v[1]))

    def compose(self, inner: "AffineTransform") -> "AffineTransform":
        """self after inner: (self @ inner).apply(p) == self.apply(inner.apply(p))."""
        return AffineTransform(self.m @ inner.m)

    def det2(self) -> float:
        return float(self.m[0, 0] * self.m[1, 1] - self.m[0, 1] * self.m[1, 0])

    def inverse(self) -> "AffineTransform":
        det = self.det2()
        if abs(det) < 1e-9:
            raise SingularTransformError(f"transform is singular (det={det:.3e})")
        a, b, c = self.m[0]
        d, e, f = self.m[1]
        ia = e / det
        ib = -b / det
        id_ = -d / det
        ie = a / det
        ic = -(ia * c + ib * f)
        if_ = -(id_ * c + ie * f)
        return AffineTransform(np.array([[ia, ib, ic], [id_, ie, if_], [0.0, 0.0, 1.0]]))

    def is_identity(self) -> bool:
        return np.array_equal(self.m, np.eye(3))


def make_translation(d: Point2) -> AffineTransform:
    if not (math.isfinite(d[0]) and math.isfinite(d[1])):
        raise GeometryError("translation must be finite")
    return AffineTransform(
        np.array([[1.0, 0.0, d[0]], [0.0, 1.0, d[1]], [0.0, 0.0, 1.0]])
    )


def make_rotation(angle: float, anchor: Point2) -> AffineTransform:
    """Rotation by `angle` radians about `anchor`.

    Built as translate(anchor) . rotate(angle) . translate(-anchor), so the
    anchor is an exact fixed point.
    """
    if not math.isfinite(angle):
        raise GeometryError("rotation angle must be finite")
    ca, sa = math.cos(angle), math.sin(angle)
    ax, ay = float(anchor[0]), float(anchor[1])
    back = np.array([[1.0, 0.0, ax], [0.0, 1.0, ay], [0.0, 0.0, 1.0]])
    rot = np.array([[ca, -sa, 0.0], [sa, ca, 0.0], [0.0, 0.0, 1.0]])
    fwd = np.array([[1.0, 0.0, -ax], [0.0, 1.0, -ay], [0.0, 0.0, 1.0]])
    return AffineTransform(back @ rot @ fwd)


def warp_field(data: np.ndarray, t: AffineTransform) -> np.ndarray:
    """Warp a real-valued 2D grid by `t` using inverse (pull) mapping.

    Each output cell center is mapped through t^-1 and sampled bilinearly
    from the source; samples outside the grid read 0.
    """
    inv = t.inverse()
    a, b, c = inv.m[0]
    d, e, f = inv.m[1]
    src = np.ascontiguousarray(data, dtype=np.float64)
    h, w = src.shape
    return _kernels.bilinear_warp(src, (a, b, c, d, e, f), h, w)


def warp_mask(mask: Mask2D, t: AffineTransform) -> Mask2D:
    """Warp a binary mask: bilinear pull sampling, then threshold at 0.5."""
    if t.is_identity():
        return mask
    vals = warp_field(mask.bits.astype(np.float64), t)
    return Mask2D(vals >= 0.5)


def centroid(mask: Mask2D) -> Point2:
    if mask.count == 0:
        raise EmptyRegionError("centroid of an empty mask is undefined")
    ys, xs = np.nonzero(mask.bits)
    return Point2(float(xs.mean()), float(ys.mean()))


def _convex_hull(points: np.ndarray) -> np.ndarray:
    """Monotone-chain convex hull, counter-clockwise in (x right, y down)."""
    pts = np.unique(points, axis=0)
    if len(pts) <= 2:
        return pts
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]

    def half(seq):
        out: list[np.ndarray] = []
        for p in seq:
            while len(out) >= 2:
                o, a = out[-2], out[-1]
                if (a[0] - o[0]) * (p[1] - o[1]) - (a[1] - o[1]) * (p[0] - o[0]) <= 0:
                    out.pop()
                else:
                    break
            out.append(p)
        return out

    lower = half(pts)
    upper = half(pts[::-1])
    hull = np.array(lower[:-1] + upper[:-1])
    if len(hull) < 2:  # all points collinear and equal after dedup
        return pts
    return hull


def min_area_rect(points: Sequence[Point2]) -> RotatedRect:
    """Minimum-area rotated rectangle enclosing the points.

    Rotating-calipers over the convex hull; among equal-area candidates the
    smallest angle wins. The angle is normalized into [0, 90) degrees, with
    width/height swapped as needed so the rectangle is unchanged.
    """
    if len(points) == 0:
        raise EmptyRegionError("min_area_rect needs at least one point")
    arr = np.asarray([(p[0], p[1]) for p in points], dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise GeometryError("points must be finite")
    hull = _convex_hull(arr)

    if len(hull) == 1:
        return RotatedRect(Point2(*hull[0]), (0.0, 0.0), 0.0)

    if len(hull) == 2:
        edges = [hull[1] - hull[0]]
    else:
        edges = [hull[(i + 1) % len(hull)] - hull[i] for i in range(len(hull))]

    best: tuple[float, float, RotatedRect] | None = None
    for e in edges:
        norm = math.hypot(e[0], e[1])
        if norm < 1e-12:
            continue
        ux, uy = e[0] / norm, e[1] / norm
        # coordinates in the frame aligned with this edge
        proj_u = arr[:, 0] * ux + arr[:, 1] * uy
        proj_v = -arr[:, 0] * uy + arr[:, 1] * ux
        lo_u, hi_u = proj_u.min(), proj_u.max()
        lo_v, hi_v = proj_v.min(), proj_v.max()
        w = hi_u - lo_u
        h = hi_v - lo_v
        area = w * h
        cu = (lo_u + hi_u) / 2.0
        cv = (lo_v + hi_v) / 2.0
        cx = cu * ux - cv * uy
        cy = cu * uy + cv * ux
        angle = math.degrees(math.atan2(uy, ux))
        k = math.floor(angle / 90.0)
        angle_norm = angle - 90.0 * k
        if angle_norm >= 90.0:  # guard against float wrap
            angle_norm -= 90.0
            k += 1
        if k % 2 != 0:
            w, h = h, w
        cand = RotatedRect(Point2(cx, cy), (float(w), float(h)), float(angle_norm))
        key = (area, angle_norm)
        if best is None or key < (best[0] - 1e-12, best[1]) or (
            abs(key[0] - best[0]) <= 1e-12 and key[1] < best[1]
        ):
            best = (area, angle_norm, cand)
    assert best is not None
    return best[2]


def rect_vertices(rect: RotatedRect) -> list[Point2]:
    """Corner points of a rotated rectangle, in convex order."""
    ang = math.radians(rect.angle_deg)
    ux, uy = math.cos(ang), math.sin(ang)
    nx, ny = -uy, ux
    cx, cy = rect.center
    hw, hh = rect.size[0] / 2.0, rect.size[1] / 2.0
    return [
        Point2(cx - hw * ux - hh * nx, cy - hw * uy - hh * ny),
        Point2(cx + hw * ux - hh * nx, cy + hw * uy - hh * ny),
        Point2(cx + hw * ux + hh * nx, cy + hw * uy + hh * ny),
        Point2(cx - hw * ux + hh * nx, cy - hw * uy + hh * ny),
    ]


def _dedup_vertices(vertices: Sequence[Point2]) -> list[Point2]:
    out: list[Point2] = []
    for v in vertices:
        if not out or Point2(*out[-1]).dist(Point2(*v)) > 1e-12:
            out.append(Point2(float(v[0]), float(v[1])))
    if len(out) > 1 and out[0].dist(out[-1]) <= 1e-12:
        out.pop()
    return out


def _segment_fill(canvas: np.ndarray, a: Point2, b: Point2) -> None:
    """Set cells whose centers lie on segment a-b (within EDGE_TOL)."""
    h, w = canvas.shape
    x_lo = max(0, math.floor(min(a.x, b.x) - EDGE_TOL))
    x_hi = min(w - 1, math.ceil(max(a.x, b.x) + EDGE_TOL))
    y_lo = max(0, math.floor(min(a.y, b.y) - EDGE_TOL))
    y_hi = min(h - 1, math.ceil(max(a.y, b.y) + EDGE_TOL))
    if x_lo > x_hi or y_lo > y_hi:
        return
    ex, ey = b.x - a.x, b.y - a.y
    norm = math.hypot(ex, ey)
    for y in range(y_lo, y_hi + 1):
        for x in range(x_lo, x_hi + 1):
            if norm < 1e-12:
                on = Point2(float(x), float(y)).dist(a) <= EDGE_TOL
            else:
                cross = ex * (y - a.y) - ey * (x - a.x)
                t = (ex * (x - a.x) + ey * (y - a.y)) / (norm * norm)
                on = abs(cross) / norm <= EDGE_TOL and -1e-12 <= t <= 1.0 + 1e-12
            if on:
                canvas[y, x] = True


def fill_convex_poly(canvas: Mask2D, vertices: Sequence[Point2]) -> Mask2D:
    """Union the convex polygon interior (cell centers inside or on the
    boundary) into the canvas.

    Degenerate inputs (all vertices collinear or coincident) fill the cells
    lying on the segment/point. Non-convex vertex lists are rejected.
    """
    verts = _dedup_vertices(vertices)
    if len(verts) == 0:
        raise GeometryError("fill_convex_poly needs at least one vertex")

    bits = np.array(canvas.bits)  # writable copy

    if len(verts) == 1:
        _segment_fill(bits, verts[0], verts[0])
        return Mask2D(bits)
    if len(verts) == 2:
        _segment_fill(bits, verts[0], verts[1])
        return Mask2D(bits)

    n = len(verts)
    # orientation by signed area (y-down: positive = clockwise on screen)
    area2 = 0.0
    for i in range(n):
        ax, ay = verts[i]
        bx, by = verts[(i + 1) % n]
        area2 += ax * by - bx * ay
    if abs(area2) < 1e-12:
        # fully collinear polygon: fill along the extreme segment
        arr = np.array([(v.x, v.y) for v in verts])
        i0 = np.lexsort((arr[:, 1], arr[:, 0]))[0]
        i1 = np.lexsort((arr[:, 1], arr[:, 0]))[-1]
        _segment_fill(bits, Point2(*arr[i0]), Point2(*arr[i1]))
        return Mask2D(bits)
    if area2 < 0:
        verts = verts[::-1]

    # convexity: every cross product of consecutive edges must be >= 0 now
    for i in range(n):
        o = verts[i]
        a = verts[(i + 1) % n]
        b = verts[(i + 2) % n]
        cross = (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
        if cross < -1e-9:
            raise ConvexityError("vertex list is not convex")

    # inward unit normals: for CCW order (in y-down frame) the interior is
    # on the left of each edge
    nxs, nys, offs = [], [], []
    for i in range(n):
        a = verts[i]
        b = verts[(i + 1) % n]
        ex, ey = b.x - a.x, b.y - a.y
        norm = math.hypot(ex, ey)
        if norm < 1e-12:
            continue
        nx, ny = -ey / norm, ex / norm
        nxs.append(nx)
        nys.append(ny)
        offs.append(nx * a.x + ny * a.y)

    h, w = bits.shape
    xs = [v.x for v in verts]
    ys = [v.y for v in verts]
    x_lo = max(0, math.floor(min(xs) - EDGE_TOL))
    x_hi = min(w - 1, math.ceil(max(xs) + EDGE_TOL))
    y_lo = max(0, math.floor(min(ys) - EDGE_TOL))
    y_hi = min(h - 1, math.ceil(max(ys) + EDGE_TOL))
    if x_lo > x_hi or y_lo > y_hi:
        return Mask2D(bits)  # polygon entirely outside the canvas

    inside = _kernels.convex_inside(
        np.asarray(nxs),
        np.asarray(nys),
        np.asarray(offs),
        int(x_lo),
        int(y_lo),
        int(x_hi - x_lo + 1),
        int(y_hi - y_lo + 1),
        EDGE_TOL,
    )
    bits[y_lo : y_hi + 1, x_lo : x_hi + 1] |= inside
    return Mask2D(bits)


def mask_union(a: Mask2D, b: Mask2D) -> Mask2D:
    if a.bits.shape != b.bits.shape:
        raise GeometryError("mask dimensions differ")
    return Mask2D(a.bits | b.bits)


def mask_iou(a: Mask2D, b: Mask2D) -> float:
    if a.bits.shape != b.bits.shape:
        raise GeometryError("mask dimensions differ")
    inter = int((a.bits & b.bits).sum())
    union = int((a.bits | b.bits).sum())
    if union == 0:
        return 1.0
    return inter / union


def mask_to_png(mask: Mask2D, path) -> None:
    """Write a mask as single-channel PNG: 0 = unset, 255 = set."""
    img = Image.fromarray(mask.bits.astype(np.uint8) * 255, mode="L")
    img.save(path, format="PNG")


def mask_from_png(path) -> Mask2D:
    img = Image.open(path).convert("L")
    arr = np.asarray(img)
    return Mask2D(arr >= 128)
