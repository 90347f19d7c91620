"""Adaptive per-region weights and the editable-region gradient mask.

Weights rebalance multiple drag operations so small regions are not
drowned out by large ones. The gradient mask is the union of the minimum
rotated rectangles enclosing each operation's source-plus-final footprint;
cells outside it are frozen during optimization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import (
    Mask2D,
    fill_convex_poly,
    mask_union,
    min_area_rect,
    rect_vertices,
)
from .schedule import RegionOp, TaskKind, target_mask_at


class RegionError(ValueError):
    pass


@dataclass(frozen=True)
class RegionWeights:
    gammas: tuple[float, ...]

    def __post_init__(self):
        if len(self.gammas) < 1:
            raise RegionError("need at least one weight")
        if abs(sum(self.gammas) - 1.0) > 1e-9:
            raise RegionError("weights must sum to 1")


@dataclass(frozen=True)
class GradientMask:
    mask: Mask2D


def region_weights(masks: list[Mask2D]) -> RegionWeights:
    """Weights inversely related to relative region size, normalized to sum 1.

    For a single region the weight is exactly 1. Raw weights are
    clamp(1 + 0.5 / (S + 0.1), 1, 5) where S is the set-cell fraction.
    """
    if len(masks) == 0:
        raise RegionError("need at least one mask")
    shape = masks[0].bits.shape
    for m in masks:
        if m.bits.shape != shape:
            raise RegionError("all masks must share dimensions")
    if len(masks) == 1:
        return RegionWeights((1.0,))
    raw = []
    for m in masks:
        s = m.count / (m.width * m.height)
        w = min(max(1.0 + 0.5 / (s + 0.1), 1.0), 5.0)
        raw.append(w)
    total = sum(raw)
    if total == 0:
        n = len(masks)
        return RegionWeights(tuple(1.0 / n for _ in masks))
    gammas = [w / total for w in raw]
    # renormalize the last entry so the invariant holds to full precision
    gammas[-1] = 1.0 - sum(gammas[:-1])
    return RegionWeights(tuple(gammas))


def op_footprint(op: RegionOp, K: int, sweep: bool = True) -> Mask2D:
    """Editable footprint of one op: filled min-area rect around its motion.

    The rectangle encloses the union of the source mask and the final
    target mask. For rotations with `sweep` on (the default), every
    intermediate step mask is unioned in as well, since a rotating region
    can leave the endpoints' rectangle mid-trajectory.
    """
    union = mask_union(op.source_mask, target_mask_at(op, K, K))
    if sweep and op.kind is TaskKind.ROTATION:
        for k in range(1, K):
            union = mask_union(union, target_mask_at(op, k, K))
    rect = min_area_rect(union.cells())
    canvas = Mask2D(np.zeros(op.source_mask.bits.shape, dtype=bool))
    return fill_convex_poly(canvas, rect_vertices(rect))


def build_gradient_mask(
    ops: list[RegionOp], width: int, height: int, K: int, sweep: bool = True
) -> GradientMask:
    """Union of per-op footprints on an all-zero canvas of the given size."""
    if len(ops) == 0:
        raise RegionError("need at least one op")
    for i, op in enumerate(ops):
        if op.source_mask.bits.shape != (height, width):
            raise RegionError(
                f"op {i} mask is {op.source_mask.bits.shape}, grid is {(height, width)}"
            )
    out = Mask2D(np.zeros((height, width), dtype=bool))
    for op in ops:
        out = mask_union(out, op_footprint(op, K, sweep=sweep))
    return GradientMask(out)
