"""Motion schedules for region drag operations.

Each operation carries a source mask and a target point; the full motion
(displacement, or angle about an anchor) is computed once and then scaled
linearly by k/K per optimization step. Steps past K clamp to the full
motion, which is how the refinement phase repeats the final transform.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

from .geometry import (
    AffineTransform,
    Mask2D,
    Point2,
    centroid,
    make_rotation,
    make_translation,
    warp_mask,
)


class ScheduleError(ValueError):
    pass


class UndefinedAngleError(ScheduleError):
    """Rotation angle is undefined (begin or target coincides with anchor)."""


class TaskKind(enum.Enum):
    RELOCATION = "relocation"
    DEFORMATION = "deformation"
    ROTATION = "rotation"


@dataclass(frozen=True)
class MotionParams:
    """Either a displacement or a rotation (angle, anchor); never both."""

    displacement: Optional[Point2] = None
    rotation: Optional[tuple[float, Point2]] = None

    def __post_init__(self):
        if (self.displacement is None) == (self.rotation is None):
            raise ScheduleError("exactly one of displacement/rotation must be set")
        if self.rotation is not None and not math.isfinite(self.rotation[0]):
            raise ScheduleError("rotation angle must be finite")

    def to_transform(self) -> AffineTransform:
        if self.displacement is not None:
            return make_translation(self.displacement)
        angle, anchor = self.rotation  # type: ignore[misc]
        return make_rotation(angle, anchor)


@dataclass(frozen=True)
class RegionOp:
    """One drag instruction: move/deform/rotate the masked region toward target."""

    kind: TaskKind
    source_mask: Mask2D
    target: Point2
    anchor: Optional[Point2] = None

    def __post_init__(self):
        if self.source_mask.count == 0:
            raise ScheduleError("source mask must have at least one set cell")
        if self.kind is TaskKind.ROTATION and self.anchor is None:
            raise ScheduleError("rotation requires an anchor point")
        if self.kind is not TaskKind.ROTATION and self.anchor is not None:
            raise ScheduleError(f"{self.kind.value} must not carry an anchor")


def signed_angle(base: Point2, apex: Point2, toward: Point2) -> float:
    """Signed angle (radians) from vector apex->base to vector apex->toward."""
    v1 = (base[0] - apex[0], base[1] - apex[1])
    v2 = (toward[0] - apex[0], toward[1] - apex[1])
    if math.hypot(*v1) < 1e-12 or math.hypot(*v2) < 1e-12:
        raise UndefinedAngleError("angle undefined: point coincides with anchor")
    cross = v1[0] * v2[1] - v1[1] * v2[0]
    dot = v1[0] * v2[0] + v1[1] * v2[1]
    return math.atan2(cross, dot)


def full_params(op: RegionOp) -> MotionParams:
    """The complete motion for an op: what step k == K applies."""
    b = centroid(op.source_mask)
    if op.kind is TaskKind.ROTATION:
        assert op.anchor is not None
        angle = signed_angle(b, op.anchor, op.target)
        return MotionParams(rotation=(angle, op.anchor))
    return MotionParams(displacement=op.target - b)


def interpolate(full: MotionParams, k: int, K: int) -> MotionParams:
    """Scale the full motion by min(k/K, 1); k past K clamps to the full motion."""
    if K < 1:
        raise ScheduleError("K must be >= 1")
    if k < 0:
        raise ScheduleError("k must be >= 0")
    frac = min(k / K, 1.0)
    if full.displacement is not None:
        d = full.displacement
        return MotionParams(displacement=Point2(d[0] * frac, d[1] * frac))
    angle, anchor = full.rotation  # type: ignore[misc]
    return MotionParams(rotation=(angle * frac, anchor))


def target_mask_at(op: RegionOp, k: int, K: int) -> Mask2D:
    """The step-k target mask: source mask under the interpolated transform.

    The transform is composed in full for step k and rasterized once, so
    resampling error does not accumulate across steps.
    """
    params = interpolate(full_params(op), k, K)
    return warp_mask(op.source_mask, params.to_transform())
