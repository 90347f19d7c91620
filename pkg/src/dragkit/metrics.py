"""Evaluation metrics for drag edits.

Image-fidelity scores compare masked regions of the original and edited
images through a pluggable perceptual distance (structural-similarity
based by default). Mean-distance scores locate where the dragged content
actually landed via L1 patch matching and measure the pixel error to the
requested target. The matching procedures here are this kit's explicit
reconstructions and are labeled as such in reports.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np
from scipy.ndimage import uniform_filter

from . import _kernels
from .geometry import Mask2D, Point2, centroid, warp_field
from .schedule import RegionOp, full_params, target_mask_at

PSNR_CAP_DB = 200.0
VARIANT_LABEL = "dragkit-variant"


class MetricsError(ValueError):
    pass


# --- raw quality measures ---------------------------------------------------


def _as_channels(a: np.ndarray) -> np.ndarray:
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim == 2:
        return arr[None, :, :]
    if arr.ndim == 3:
        return arr
    raise MetricsError("expected a 2D or 3D array")


def ssim(a: np.ndarray, b: np.ndarray, window: int = 7) -> float:
    """Mean structural similarity with a uniform window (default 7x7).

    Channels are scored independently and averaged. The dynamic range is
    taken from the joint min/max of both inputs.
    """
    xa, xb = _as_channels(a), _as_channels(b)
    if xa.shape != xb.shape:
        raise MetricsError(f"shape mismatch {xa.shape} vs {xb.shape}")
    rng = float(max(xa.max(), xb.max()) - min(xa.min(), xb.min()))
    if rng == 0.0:
        rng = 1.0
    c1 = (0.01 * rng) ** 2
    c2 = (0.03 * rng) ** 2
    scores = []
    for ch in range(xa.shape[0]):
        x, y = xa[ch], xb[ch]
        mu_x = uniform_filter(x, size=window, mode="reflect")
        mu_y = uniform_filter(y, size=window, mode="reflect")
        xx = uniform_filter(x * x, size=window, mode="reflect")
        yy = uniform_filter(y * y, size=window, mode="reflect")
        xy = uniform_filter(x * y, size=window, mode="reflect")
        var_x = xx - mu_x * mu_x
        var_y = yy - mu_y * mu_y
        cov = xy - mu_x * mu_y
        num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
        den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
        scores.append(float(np.mean(num / den)))
    return float(np.mean(scores))


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB, capped at 200 for exact recovery."""
    xa, xb = _as_channels(a), _as_channels(b)
    if xa.shape != xb.shape:
        raise MetricsError(f"shape mismatch {xa.shape} vs {xb.shape}")
    mse = float(np.mean((xa - xb) ** 2))
    rng = float(xa.max() - xa.min())
    if rng == 0.0:
        rng = 1.0
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(10.0 * math.log10(rng * rng / mse), PSNR_CAP_DB)


def mae(a: np.ndarray, b: np.ndarray) -> float:
    xa, xb = _as_channels(a), _as_channels(b)
    if xa.shape != xb.shape:
        raise MetricsError(f"shape mismatch {xa.shape} vs {xb.shape}")
    return float(np.mean(np.abs(xa - xb)))


# --- pluggable perceptual distance ------------------------------------------


class PerceptualDistance(Protocol):
    label: str

    def dist(self, a: np.ndarray, b: np.ndarray) -> float: ...


@dataclass(frozen=True)
class SsimDistance:
    """(1 - SSIM) / 2, mapped into [0, 1]; 0 for identical inputs."""

    window: int = 7
    label: str = "1-ssim"

    def dist(self, a: np.ndarray, b: np.ndarray) -> float:
        d = (1.0 - ssim(a, b, window=self.window)) / 2.0
        return min(max(d, 0.0), 1.0)


@dataclass(frozen=True)
class MadDistance:
    """Mean absolute difference scaled by the joint dynamic range."""

    label: str = "mad"

    def dist(self, a: np.ndarray, b: np.ndarray) -> float:
        xa, xb = _as_channels(a), _as_channels(b)
        rng = float(max(xa.max(), xb.max()) - min(xa.min(), xb.min()))
        if rng == 0.0:
            return 0.0
        return min(max(mae(xa, xb) / rng, 0.0), 1.0)


DEFAULT_DISTANCE = SsimDistance()


# --- image fidelity ---------------------------------------------------------


def _masked(x: np.ndarray, mask: Mask2D) -> np.ndarray:
    arr = _as_channels(x)
    if arr.shape[1:] != mask.bits.shape:
        raise MetricsError("mask dimensions do not match the image")
    return arr * mask.bits


def if_s2s(
    x: np.ndarray,
    x_edited: np.ndarray,
    source_masks: Sequence[Mask2D],
    distance: PerceptualDistance = DEFAULT_DISTANCE,
) -> float:
    """How strongly the source regions changed: 1 - mean masked distance.

    Lower is better (content should have moved out of the source region).
    """
    if len(source_masks) == 0:
        raise MetricsError("need at least one source mask")
    ds = []
    for m in source_masks:
        if m.count == 0:
            raise MetricsError("source mask is empty")
        ds.append(distance.dist(_masked(x, m), _masked(x_edited, m)))
    return 1.0 - float(np.mean(ds))


def if_s2t(
    x: np.ndarray,
    x_edited: np.ndarray,
    ops: Sequence[RegionOp],
    K: int,
    distance: PerceptualDistance = DEFAULT_DISTANCE,
) -> float:
    """How faithfully source content arrived at the target: per op, the
    masked original is warped by the op's full transform and compared to
    the edited image inside the final target mask. Higher is better.
    """
    if len(ops) == 0:
        raise MetricsError("need at least one op")
    ds = []
    for op in ops:
        t = full_params(op).to_transform()
        target_mask = target_mask_at(op, K, K)
        if target_mask.count == 0:
            raise MetricsError("target mask is empty after the warp (fully clipped)")
        src = _masked(x, op.source_mask)
        x_aff = np.stack([warp_field(ch, t) for ch in src])
        ds.append(
            distance.dist(x_aff * target_mask.bits, _masked(x_edited, target_mask))
        )
    return 1.0 - float(np.mean(ds))


def if_bg(
    x: np.ndarray,
    x_edited: np.ndarray,
    editable: Mask2D,
    distance: PerceptualDistance = DEFAULT_DISTANCE,
) -> float:
    """Background preservation outside the editable region. Higher is better."""
    inv = Mask2D(~editable.bits)
    if inv.count == 0:
        raise MetricsError("editable region covers the whole image; no background")
    return 1.0 - distance.dist(_masked(x, inv), _masked(x_edited, inv))


# --- mean distance ----------------------------------------------------------


def _extract_patch(feats: np.ndarray, cx: int, cy: int, r: int) -> np.ndarray:
    c, h, w = feats.shape
    if not (r <= cx < w - r and r <= cy < h - r):
        raise MetricsError(f"patch at ({cx}, {cy}) radius {r} leaves the grid")
    return np.ascontiguousarray(feats[:, cy - r : cy + r + 1, cx - r : cx + r + 1])


def best_match(
    feats: np.ndarray,
    patch: np.ndarray,
    allowed: np.ndarray,
    prefer: Point2,
) -> Point2:
    """Location whose patch has minimal L1 distance to `patch`.

    Ties are broken by Euclidean distance to `prefer`, then row-major order.
    """
    dist_map = _kernels.l1_match(
        np.ascontiguousarray(feats, dtype=np.float64),
        np.ascontiguousarray(patch, dtype=np.float64),
        np.ascontiguousarray(allowed, dtype=bool),
    )
    best = dist_map.min()
    if not np.isfinite(best):
        raise MetricsError("match search region is empty")
    ys, xs = np.nonzero(dist_map == best)
    d2 = (xs - prefer[0]) ** 2 + (ys - prefer[1]) ** 2
    i = int(np.lexsort((xs, ys, d2))[0])
    return Point2(float(xs[i]), float(ys[i]))


def _op_search_region(op: RegionOp, shape: tuple[int, int]) -> np.ndarray:
    from .region import op_footprint  # local import to avoid a cycle

    return np.array(op_footprint(op, K=1).bits)


def md1(
    x_feats: np.ndarray,
    xedited_feats: np.ndarray,
    op: RegionOp,
    patch_radius: int = 3,
) -> float:
    """Pixel distance between the op's target point and the best match of
    the source-centroid patch inside the edited features.

    The search is restricted to the op's editable footprint. On a tie the
    location nearest the source centroid wins, so a completely unchanged
    (constant) image reports the full remaining drag distance.
    """
    fa, fb = _as_channels(x_feats), _as_channels(xedited_feats)
    if fa.shape != fb.shape:
        raise MetricsError("feature grids differ")
    b = centroid(op.source_mask)
    bx, by = int(round(b.x)), int(round(b.y))
    patch = _extract_patch(fa, bx, by, patch_radius)
    allowed = _op_search_region(op, fa.shape[1:])
    loc = best_match(fb, patch, allowed, Point2(float(bx), float(by)))
    return loc.dist(op.target)


def md2(
    x_feats: np.ndarray,
    xedited_feats: np.ndarray,
    op: RegionOp,
    scope_radius: int = 5,
    patch_radius: int = 3,
) -> float:
    """Mean of the md1 matching error over a disc of integer offsets around
    the pre-drag centroid, each compared against the equally offset target.

    scope_radius 0 reduces exactly to md1.
    """
    fa, fb = _as_channels(x_feats), _as_channels(xedited_feats)
    if fa.shape != fb.shape:
        raise MetricsError("feature grids differ")
    b = centroid(op.source_mask)
    bx, by = int(round(b.x)), int(round(b.y))
    allowed = _op_search_region(op, fa.shape[1:])
    if scope_radius > 0:
        # matches for offset probes ride scope_radius cells beyond the
        # footprint, so widen the search region accordingly
        from scipy.ndimage import binary_dilation

        span = np.arange(-scope_radius, scope_radius + 1)
        disc = span[:, None] ** 2 + span[None, :] ** 2 <= scope_radius**2
        allowed = binary_dilation(allowed, structure=disc)
    c, h, w = fa.shape
    dists = []
    for oy in range(-scope_radius, scope_radius + 1):
        for ox in range(-scope_radius, scope_radius + 1):
            if ox * ox + oy * oy > scope_radius * scope_radius:
                continue
            px, py = bx + ox, by + oy
            if not (patch_radius <= px < w - patch_radius and patch_radius <= py < h - patch_radius):
                continue
            patch = _extract_patch(fa, px, py, patch_radius)
            loc = best_match(fb, patch, allowed, Point2(float(px), float(py)))
            shifted_target = Point2(op.target.x + ox, op.target.y + oy)
            dists.append(loc.dist(shifted_target))
    if not dists:
        raise MetricsError("no valid offsets in the centroid scope")
    return float(np.mean(dists))


# --- report -----------------------------------------------------------------


@dataclass(frozen=True)
class MetricReport:
    if_bg: float
    if_s2t: float
    if_s2s: float
    md1: float
    md2: float
    distance_label: str = DEFAULT_DISTANCE.label
    variant: str = VARIANT_LABEL

    def __post_init__(self):
        for name in ("if_bg", "if_s2t", "if_s2s"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0) or not math.isfinite(v):
                raise MetricsError(f"{name} must lie in [0, 1], got {v}")
        for name in ("md1", "md2"):
            v = getattr(self, name)
            if v < 0 or not math.isfinite(v):
                raise MetricsError(f"{name} must be finite and >= 0, got {v}")

    def to_json(self) -> str:
        return json.dumps(
            {
                "if_bg": self.if_bg,
                "if_s2t": self.if_s2t,
                "if_s2s": self.if_s2s,
                "md1": self.md1,
                "md2": self.md2,
                "distance": self.distance_label,
                "variant": self.variant,
            }
        )

    def to_table(self) -> str:
        header = f"{'IF_bg':>8} {'IF_s2t':>8} {'IF_s2s':>8} {'MD1':>8} {'MD2':>8}"
        row = (
            f"{self.if_bg:>8.4f} {self.if_s2t:>8.4f} {self.if_s2s:>8.4f} "
            f"{self.md1:>8.2f} {self.md2:>8.2f}"
        )
        note = f"(distance: {self.distance_label}; md: {self.variant})"
        return "\n".join([header, row, note])


def evaluate(
    x: np.ndarray,
    x_edited: np.ndarray,
    ops: Sequence[RegionOp],
    editable: Mask2D,
    K: int,
    x_feats: np.ndarray | None = None,
    xedited_feats: np.ndarray | None = None,
    patch_radius: int = 3,
    scope_radius: int = 5,
    distance: PerceptualDistance = DEFAULT_DISTANCE,
) -> MetricReport:
    """Full metric row for one edit. Feature grids default to the images."""
    fa = x if x_feats is None else x_feats
    fb = x_edited if xedited_feats is None else xedited_feats
    md1s = [md1(fa, fb, op, patch_radius) for op in ops]
    md2s = [md2(fa, fb, op, scope_radius, patch_radius) for op in ops]
    return MetricReport(
        if_bg=if_bg(x, x_edited, editable, distance),
        if_s2t=if_s2t(x, x_edited, ops, K, distance),
        if_s2s=if_s2s(x, x_edited, [op.source_mask for op in ops], distance),
        md1=float(np.mean(md1s)),
        md2=float(np.mean(md2s)),
        distance_label=distance.label,
    )
