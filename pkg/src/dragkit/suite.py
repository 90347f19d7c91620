"""Synthetic drag suite: reproducible toy cases and the region-vs-point
comparison table.

Each case is a ring-textured Gaussian blob on a 64x64 two-channel latent.
The radial carrier (period 4 cells) makes single cells ambiguous under
pointwise matching while staying translation-comparable after any of the
three task transforms; pooled-blur features average the carrier away and
keep the envelope. Success is measured with a region-scale match radius
so that planting a patch-sized copy of the source does not count as a
completed drag.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .engine import (
    DragConfig,
    PointOp,
    run_drag,
    run_point_drag,
)
from .flow import LatentField
from .geometry import Mask2D, Point2, centroid
from .metrics import md1
from .region import build_gradient_mask
from .schedule import RegionOp, TaskKind

SUITE_MD_RADIUS = 6  # region-scale match patch for success measurement
COMPRESSED_EXTRACTOR = {"name": "pooled", "stride": 2, "sigma": 1.5}


@dataclass(frozen=True)
class SuiteCase:
    name: str
    z0: LatentField
    op: RegionOp


def ring_blob_latent(
    cx: float,
    cy: float,
    seed: int,
    width: int = 64,
    height: int = 64,
    channels: int = 2,
    env_sigma: float = 3.5,
    period: float = 4.0,
    contrast: float = 0.6,
    noise: float = 0.02,
) -> LatentField:
    """Gaussian envelope times a radial cosine carrier, plus faint noise."""
    rng = np.random.default_rng(seed)
    ys, xs = np.mgrid[0:height, 0:width]
    r = np.sqrt((xs - cx) ** 2 + (ys - cy) ** 2)
    env = np.exp(-(r**2) / (2 * env_sigma**2))
    chans = []
    for _ in range(channels):
        phase = rng.uniform(0, 2 * np.pi)
        carrier = 1.0 + contrast * np.cos(2 * np.pi * r / period + phase)
        chans.append(env * carrier + noise * rng.standard_normal((height, width)) * env)
    return LatentField(np.stack(chans))


def disk_mask(cx: float, cy: float, radius: float, width: int = 64, height: int = 64) -> Mask2D:
    ys, xs = np.mgrid[0:height, 0:width]
    return Mask2D((xs - cx) ** 2 + (ys - cy) ** 2 <= radius**2)


def _relocation_case(name, seed, cx, cy, dx, dy, mask_r=8.0) -> SuiteCase:
    z0 = ring_blob_latent(cx, cy, seed)
    op = RegionOp(
        TaskKind.RELOCATION, disk_mask(cx, cy, mask_r), Point2(cx + dx, cy + dy)
    )
    return SuiteCase(name, z0, op)


def _rotation_case(name, seed, cx, cy, ax, ay, angle_deg, mask_r=8.0) -> SuiteCase:
    z0 = ring_blob_latent(cx, cy, seed)
    ang = math.radians(angle_deg)
    bx, by = cx - ax, cy - ay
    target = Point2(
        ax + bx * math.cos(ang) - by * math.sin(ang),
        ay + bx * math.sin(ang) + by * math.cos(ang),
    )
    op = RegionOp(
        TaskKind.ROTATION, disk_mask(cx, cy, mask_r), target, anchor=Point2(ax, ay)
    )
    return SuiteCase(name, z0, op)


def toy_suite() -> list[SuiteCase]:
    """The fixed 10-case suite: six relocations of 8-16 cells and four
    rotations of 30-90 degrees."""
    return [
        _relocation_case("reloc-8-right", 0, 22, 32, 8, 0),
        _relocation_case("reloc-10-down", 1, 30, 22, 0, 10),
        _relocation_case("reloc-12-right", 2, 22, 30, 12, 0),
        _relocation_case("reloc-13-diag", 3, 22, 22, 9, 9),
        _relocation_case("reloc-14-left", 4, 40, 34, -14, 0),
        _relocation_case("reloc-16-up", 5, 34, 42, 0, -16),
        _rotation_case("rot-30", 6, 22, 30, 22, 46, 30),
        _rotation_case("rot-45", 7, 26, 26, 26, 42, 45),
        _rotation_case("rot-60", 8, 24, 32, 24, 46, 60),
        _rotation_case("rot-90", 9, 30, 24, 30, 38, 90),
    ]


@dataclass(frozen=True)
class CaseResult:
    name: str
    md1_initial: float
    md1_final: float
    centroid_error: float | None
    iterations: int


@dataclass(frozen=True)
class SuiteReport:
    mode: str
    extractor: str
    cases: list[CaseResult]
    elapsed_s: float

    @property
    def mean_md1_final(self) -> float:
        return float(np.mean([c.md1_final for c in self.cases]))

    @property
    def all_succeeded(self) -> bool:
        return all(c.md1_final <= 0.2 * c.md1_initial for c in self.cases)


def run_suite(
    mode: str = "region",
    extractor: str | dict = "identity",
    config: DragConfig | None = None,
    cases: list[SuiteCase] | None = None,
) -> SuiteReport:
    """Run every suite case in the given mode and measure where content
    landed, always on identity features of the latent itself."""
    if cases is None:
        cases = toy_suite()
    cfg = config if config is not None else DragConfig()
    cfg = DragConfig(**{**cfg.__dict__, "extractor": extractor})
    out: list[CaseResult] = []
    t0 = time.perf_counter()
    for case in cases:
        mi = md1(case.z0.data, case.z0.data, case.op, patch_radius=SUITE_MD_RADIUS)
        if mode == "region":
            res = run_drag(case.z0, [case.op], cfg)
            cerr = case.op.target.dist(res.centroid_trajectory[0][-1])
            final = res.final_z
            iters = res.iterations_run
        elif mode == "point":
            b = build_gradient_mask([case.op], case.z0.width, case.z0.height, cfg.k_motion)
            pop = PointOp(handle=centroid(case.op.source_mask), target=case.op.target)
            pres = run_point_drag(case.z0, [pop], cfg, editable=b)
            cerr = None
            final = pres.final_z
            iters = pres.iterations_run
        else:
            raise ValueError(f"unknown mode {mode!r}")
        mf = md1(case.z0.data, final.data, case.op, patch_radius=SUITE_MD_RADIUS)
        out.append(CaseResult(case.name, mi, mf, cerr, iters))
    elapsed = time.perf_counter() - t0
    label = extractor if isinstance(extractor, str) else extractor.get("name", "?")
    return SuiteReport(mode=mode, extractor=str(label), cases=out, elapsed_s=elapsed)


def ablation_table(config: DragConfig | None = None) -> str:
    """Two-row comparison: region vs point supervision on fine (identity)
    and compressed (pooled-blur) features, matched iteration budgets."""
    rows = []
    for mode in ("region", "point"):
        fine = run_suite(mode, "identity", config)
        compressed = run_suite(mode, COMPRESSED_EXTRACTOR, config)
        rows.append((mode, fine, compressed))
    lines = [
        f"{'supervision':<12} {'mean MD1 (fine)':>16} {'mean MD1 (compressed)':>22}",
    ]
    for mode, fine, compressed in rows:
        lines.append(
            f"{mode:<12} {fine.mean_md1_final:>16.2f} {compressed.mean_md1_final:>22.2f}"
        )
    lines.append(
        f"(match radius {SUITE_MD_RADIUS} cells; lower is better; "
        f"{len(rows[0][1].cases)} cases per cell)"
    )
    return "\n".join(lines)
