"""Latent drag optimization.

The region loop matches features inside the step-k target mask against a
stop-gradient snapshot of the masked source features, optionally aligned
into the target frame by the same step-k affine (the default; the literal
unaligned form is kept for study). Updates are hard-constrained: cells
outside the editable mask are reset to the original latent every step, so
the background is preserved bit for bit.

A point-based baseline (patch alignment + nearest-neighbor tracking) is
included for head-to-head comparisons.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .extractors import FeatureExtractor, FeatureField, build_extractor, fd_gradient_check
from .flow import LatentField
from .geometry import AffineTransform, Mask2D, Point2, centroid
from .metrics import best_match
from .region import GradientMask, RegionWeights, build_gradient_mask, region_weights
from .schedule import RegionOp, full_params, interpolate, target_mask_at

LATENT_MAGIC = b"DFLT"


class EngineError(RuntimeError):
    pass


# --- configuration ----------------------------------------------------------


@dataclass(frozen=True)
class DragConfig:
    k_motion: int = 50
    k_refine: int = 20
    lr_phase1: float = 1000.0
    lr_phase2: float = 1200.0
    loss_mode: str = "l1"  # "l1" or "huber"
    huber_delta: float = 1e-3
    align_source: bool = True
    normalize_grad: bool = True
    lr_scale: float = 1e-4  # maps lr magnitudes onto unit-scale latents
    sweep: bool = True
    seed: int = 0
    extractor: str | dict = "identity"
    point_step_px: float = 1.0
    point_beta: float = 0.8
    point_lambda: float = 0.1
    # inversion-pipeline knobs recorded for full-scale runs; the toy loop
    # does not assert any relationship between them
    diffusion_steps: int = 25
    skip_steps: int = 6
    edit_start_step: int = 19
    optimize_at_step: int = 7

    def __post_init__(self):
        if self.k_motion < 1:
            raise ValueError("k_motion must be >= 1")
        if self.k_refine < 0:
            raise ValueError("k_refine must be >= 0")
        if self.lr_phase1 <= 0 or self.lr_phase2 <= 0:
            raise ValueError("learning rates must be positive")
        if self.loss_mode not in ("l1", "huber"):
            raise ValueError(f"unknown loss mode {self.loss_mode!r}")

    @property
    def total_steps(self) -> int:
        return self.k_motion + self.k_refine

    def lr_at(self, k: int) -> float:
        return self.lr_phase1 if k < self.k_motion else self.lr_phase2

    @classmethod
    def from_json(cls, text: str) -> "DragConfig":
        return cls(**json.loads(text))

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2)


def _loss_terms(resid: np.ndarray, mode: str, delta: float) -> tuple[float, np.ndarray]:
    """Value and elementwise derivative of the residual penalty."""
    if mode == "l1":
        return float(np.abs(resid).sum()), np.sign(resid)
    small = np.abs(resid) <= delta
    vals = np.where(small, resid * resid / (2.0 * delta), np.abs(resid) - delta / 2.0)
    return float(vals.sum()), np.clip(resid / delta, -1.0, 1.0)


# --- grid alignment ---------------------------------------------------------


def downsample_mask(mask: Mask2D, stride: int) -> np.ndarray:
    """Latent-grid mask onto the feature grid: any set cell marks the block."""
    if stride == 1:
        return np.asarray(mask.bits, dtype=np.float64)
    h, w = mask.bits.shape
    if h % stride or w % stride:
        raise EngineError(f"mask {w}x{h} not divisible by stride {stride}")
    blocks = mask.bits.reshape(h // stride, stride, w // stride, stride)
    return blocks.any(axis=(1, 3)).astype(np.float64)


def to_feature_frame(t: AffineTransform, stride: int) -> AffineTransform:
    """Re-express a latent-grid transform in feature-grid coordinates."""
    if stride == 1:
        return t
    off = (stride - 1) / 2.0
    s = AffineTransform(
        np.array([[stride, 0.0, off], [0.0, stride, off], [0.0, 0.0, 1.0]])
    )
    return s.inverse().compose(t).compose(s)


def _warp_channels(data: np.ndarray, t: AffineTransform) -> np.ndarray:
    from .geometry import warp_field

    if t.is_identity():
        return np.array(data)
    return np.stack([warp_field(ch, t) for ch in data])


# --- state and results ------------------------------------------------------


@dataclass
class DragState:
    z: np.ndarray  # working latent, mutated across steps
    z_orig: np.ndarray  # reconstruction reference; never touched
    baseline_features: list[np.ndarray]  # per op: mask0 * F(z0), frozen
    masks_f0: list[np.ndarray]  # per op: source mask on the feature grid
    gradient_mask: GradientMask
    weights: RegionWeights
    k: int = 0

    @property
    def editable(self) -> np.ndarray:
        return self.gradient_mask.mask.bits.astype(np.float64)


@dataclass(frozen=True)
class DragResult:
    final_z: LatentField
    loss_trajectory: list[float]
    centroid_trajectory: list[list[Point2]]  # per op, one entry per iteration
    iterations_run: int

    def to_json(self) -> str:
        return json.dumps(
            {
                "iterations_run": self.iterations_run,
                "loss_trajectory": self.loss_trajectory,
                "centroid_trajectory": [
                    [[p.x, p.y] for p in traj] for traj in self.centroid_trajectory
                ],
            }
        )


def init_state(
    z0: LatentField, ops: Sequence[RegionOp], config: DragConfig, extractor: FeatureExtractor
) -> DragState:
    stride = extractor.descriptor.stride
    f0 = extractor.extract(z0).data
    baselines = []
    masks_f0 = []
    for op in ops:
        mf = downsample_mask(op.source_mask, stride)
        masks_f0.append(mf)
        snapshot = mf * f0
        snapshot.setflags(write=False)
        baselines.append(snapshot)
    b = build_gradient_mask(
        list(ops), z0.width, z0.height, config.k_motion, sweep=config.sweep
    )
    return DragState(
        z=np.array(z0.data),
        z_orig=np.array(z0.data),
        baseline_features=baselines,
        masks_f0=masks_f0,
        gradient_mask=b,
        weights=region_weights([op.source_mask for op in ops]),
    )


# --- region loss and update -------------------------------------------------


def drag_loss(
    state: DragState,
    ops: Sequence[RegionOp],
    k: int,
    K: int,
    extractor: FeatureExtractor,
    loss_mode: str = "l1",
    huber_delta: float = 1e-3,
    align_source: bool = True,
) -> tuple[float, np.ndarray]:
    """Weighted region feature-matching loss and its latent gradient.

    Aligned mode warps each op's frozen source-feature snapshot into the
    step-k frame before subtracting, so matching content at the commanded
    position scores zero. With align_source off the snapshot is compared
    in place (source frame), reproducing the plain masked difference.
    """
    stride = extractor.descriptor.stride
    fz = extractor.extract(LatentField(state.z))
    g_feat = np.zeros_like(fz.data)
    total = 0.0
    for i, op in enumerate(ops):
        gamma = state.weights.gammas[i]
        mask_k = downsample_mask(target_mask_at(op, k, K), stride)
        if mask_k.shape != fz.data.shape[1:]:
            raise EngineError("mask and feature grids disagree after downsampling")
        if align_source:
            t = interpolate(full_params(op), k, K).to_transform()
            target = _warp_channels(state.baseline_features[i], to_feature_frame(t, stride))
            resid = mask_k * (fz.data - target)
        else:
            resid = mask_k * fz.data - state.baseline_features[i]
        value, deriv = _loss_terms(resid, loss_mode, huber_delta)
        total += gamma * value
        g_feat += gamma * mask_k * deriv
    grad = extractor.adjoint(FeatureField(g_feat), LatentField(state.z))
    return total, grad.data


def hard_step(state: DragState, grad: np.ndarray, alpha: float) -> np.ndarray:
    """Gradient step on editable cells; everything else snaps back to the
    original latent, bit for bit."""
    if grad.shape != state.z.shape:
        raise EngineError("gradient shape does not match the latent")
    b = state.editable
    state.z = b * (state.z - alpha * grad) + (1.0 - b) * state.z_orig
    return state.z


def soft_bg_loss(z_next: np.ndarray, z_next_ref: np.ndarray, b: GradientMask) -> float:
    """The auxiliary background-consistency penalty that hard constraints
    replace; kept for ablations."""
    if z_next.shape != z_next_ref.shape:
        raise EngineError("latent shapes differ")
    keep = 1.0 - b.mask.bits.astype(np.float64)
    return float(np.abs((z_next - z_next_ref) * keep).sum())


def _normalized_alpha_grad(
    grad: np.ndarray, lr: float, config: DragConfig
) -> tuple[float, np.ndarray]:
    if not config.normalize_grad:
        return lr, grad
    gmax = float(np.abs(grad).max())
    if gmax < 1e-30:
        return 0.0, grad
    return lr * config.lr_scale, grad / gmax


def content_centroid(z: np.ndarray, within: np.ndarray) -> Optional[Point2]:
    """Locate the dominant content blob inside a region: the magnitude-
    weighted centroid of cells at or above half the peak magnitude.

    Thresholding at half peak keeps the measurement on the moved blob and
    off the faint residue an L1 step with fixed size leaves behind.
    Returns None when the region carries no mass.
    """
    w = np.abs(z).sum(axis=0) * within
    peak = w.max()
    if peak < 1e-12:
        return None
    w = w * (w >= 0.5 * peak)
    total = w.sum()
    h, wth = w.shape
    ys, xs = np.mgrid[0:h, 0:wth]
    return Point2(float((xs * w).sum() / total), float((ys * w).sum() / total))


def run_drag(
    z0: LatentField,
    ops: Sequence[RegionOp],
    config: DragConfig,
    on_step: Optional[Callable[[int, float, list[Point2]], None]] = None,
) -> DragResult:
    """The full drag loop: K_motion steps walking the schedule, then
    K_refine steps repeating the final transform at the second learning
    rate. Deterministic for fixed inputs."""
    if len(ops) == 0:
        raise EngineError("need at least one op")
    extractor = build_extractor(config.extractor)
    if not extractor.descriptor.linear:
        err = fd_gradient_check(
            extractor,
            lambda ex, z: _quadratic_probe(ex, z),
            z0,
            delta=1e-4,
        )
        if err > 1e-3:
            raise EngineError(f"extractor failed the gradient check ({err:.2e})")
    state = init_state(z0, ops, config, extractor)
    from .region import op_footprint

    footprints = [op_footprint(op, config.k_motion, sweep=config.sweep).bits for op in ops]

    losses: list[float] = []
    centroids: list[list[Point2]] = [[] for _ in ops]
    for k in range(config.total_steps):
        sched_k = min(k, config.k_motion)
        loss, grad = drag_loss(
            state,
            ops,
            sched_k,
            config.k_motion,
            extractor,
            config.loss_mode,
            config.huber_delta,
            config.align_source,
        )
        if not math.isfinite(loss):
            raise EngineError(f"non-finite loss at iteration {k}: {loss}")
        alpha, step_grad = _normalized_alpha_grad(grad, config.lr_at(k), config)
        hard_step(state, step_grad, alpha)
        state.k = k + 1
        losses.append(loss)
        step_centroids = []
        for i, op in enumerate(ops):
            c = content_centroid(state.z, footprints[i])
            if c is None:
                c = centroid(target_mask_at(op, sched_k, config.k_motion))
            centroids[i].append(c)
            step_centroids.append(c)
        if on_step is not None:
            on_step(k, loss, step_centroids)
    return DragResult(
        final_z=LatentField(state.z),
        loss_trajectory=losses,
        centroid_trajectory=centroids,
        iterations_run=config.total_steps,
    )


def _quadratic_probe(ex: FeatureExtractor, z: LatentField) -> tuple[float, LatentField]:
    f = ex.extract(z)
    return 0.5 * float((f.data**2).sum()), ex.adjoint(f, z)


# --- point-based baseline ---------------------------------------------------


@dataclass(frozen=True)
class PointOp:
    handle: Point2
    target: Point2
    patch_radius: int = 3
    track_radius: int = 6

    def __post_init__(self):
        if self.patch_radius < 1 or self.track_radius < 1:
            raise ValueError("radii must be >= 1")


@dataclass
class PointState:
    z: np.ndarray
    z_orig: np.ndarray
    base_feats: np.ndarray  # F(z0), frozen
    prev_feats: np.ndarray  # F at the previous iterate
    originals: list[Point2]  # handles at k = 0, in feature coordinates
    editable: np.ndarray  # editable-region bits on the latent grid


def _to_feature_point(p: Point2, stride: int) -> Point2:
    if stride == 1:
        return p
    off = (stride - 1) / 2.0
    return Point2((p.x - off) / stride, (p.y - off) / stride)


def _from_feature_point(p: Point2, stride: int) -> Point2:
    if stride == 1:
        return p
    off = (stride - 1) / 2.0
    return Point2(p.x * stride + off, p.y * stride + off)


def _patch_cells(center: Point2, r: int, h: int, w: int) -> tuple[int, int]:
    cx, cy = int(round(center.x)), int(round(center.y))
    if not (r <= cx < w - r and r <= cy < h - r):
        raise EngineError(f"patch at ({cx}, {cy}) radius {r} leaves the grid")
    return cx, cy


def point_ms_loss(
    state: PointState,
    point_ops: Sequence[PointOp],
    beta: float,
    lam: float,
    extractor: FeatureExtractor,
) -> tuple[float, np.ndarray]:
    """Motion-supervision loss for the point baseline.

    beta weights patch alignment against the original handle patches;
    (1 - beta) weights smoothness against the previous iterate's features;
    lam weights the soft background penalty outside the editable region.
    Each op's `handle` is its current supervised position (feature-grid
    coordinates are derived from it).
    """
    stride = extractor.descriptor.stride
    fz = extractor.extract(LatentField(state.z))
    c, fh, fw = fz.data.shape
    g_feat = np.zeros_like(fz.data)
    total = 0.0
    for i, op in enumerate(point_ops):
        r = op.patch_radius
        hx, hy = _patch_cells(_to_feature_point(op.handle, stride), r, fh, fw)
        ox, oy = _patch_cells(state.originals[i], r, fh, fw)
        cur = fz.data[:, hy - r : hy + r + 1, hx - r : hx + r + 1]
        base = state.base_feats[:, oy - r : oy + r + 1, ox - r : ox + r + 1]
        resid_a = cur - base
        total += beta * float(np.abs(resid_a).sum())
        g_feat[:, hy - r : hy + r + 1, hx - r : hx + r + 1] += beta * np.sign(resid_a)
        prev = state.prev_feats[:, hy - r : hy + r + 1, hx - r : hx + r + 1]
        resid_s = cur - prev
        total += (1.0 - beta) * float(np.abs(resid_s).sum())
        g_feat[:, hy - r : hy + r + 1, hx - r : hx + r + 1] += (1.0 - beta) * np.sign(
            resid_s
        )
    grad = extractor.adjoint(FeatureField(g_feat), LatentField(state.z)).data
    keep = 1.0 - state.editable
    resid_m = (state.z - state.z_orig) * keep
    total += lam * float(np.abs(resid_m).sum())
    grad = grad + lam * np.sign(resid_m) * keep
    return total, grad


def point_track(
    features_now: np.ndarray,
    features_base: np.ndarray,
    handle: Point2,
    r2: int,
    original: Optional[Point2] = None,
) -> Point2:
    """Nearest-neighbor handle update: the cell inside the search window
    whose feature vector best matches the original handle's base feature.

    Ties prefer the smallest distance to the current handle, then
    row-major order. The window is clipped at the grid border.
    """
    now = np.asarray(features_now, dtype=np.float64)
    base = np.asarray(features_base, dtype=np.float64)
    if now.ndim == 2:
        now = now[None]
    if base.ndim == 2:
        base = base[None]
    c, h, w = now.shape
    src = original if original is not None else handle
    sx, sy = int(round(src.x)), int(round(src.y))
    sx, sy = min(max(sx, 0), w - 1), min(max(sy, 0), h - 1)
    target_vec = base[:, sy : sy + 1, sx : sx + 1]
    hx, hy = int(round(handle.x)), int(round(handle.y))
    allowed = np.zeros((h, w), dtype=bool)
    y0, y1 = max(0, hy - r2), min(h - 1, hy + r2)
    x0, x1 = max(0, hx - r2), min(w - 1, hx + r2)
    allowed[y0 : y1 + 1, x0 : x1 + 1] = True
    return best_match(now, target_vec, allowed, handle)


@dataclass(frozen=True)
class PointDragResult:
    final_z: LatentField
    loss_trajectory: list[float]
    handle_trajectory: list[list[Point2]]  # per op, latent coordinates
    iterations_run: int


def run_point_drag(
    z0: LatentField,
    point_ops: Sequence[PointOp],
    config: DragConfig,
    editable: Optional[GradientMask] = None,
) -> PointDragResult:
    """Point baseline loop: advance each supervised handle toward its
    target by a fixed step, take a motion-supervision gradient step, then
    re-track the handle by feature matching. Runs the same iteration
    budget as the region loop."""
    if len(point_ops) == 0:
        raise EngineError("need at least one point op")
    extractor = build_extractor(config.extractor)
    stride = extractor.descriptor.stride
    base = extractor.extract(z0).data
    if editable is None:
        bits = np.ones((z0.height, z0.width), dtype=bool)
        editable = GradientMask(Mask2D(bits))
    state = PointState(
        z=np.array(z0.data),
        z_orig=np.array(z0.data),
        base_feats=base,
        prev_feats=np.array(base),
        originals=[_to_feature_point(op.handle, stride) for op in point_ops],
        editable=editable.mask.bits.astype(np.float64),
    )
    supervised = [op.handle for op in point_ops]
    tracked = [op.handle for op in point_ops]
    losses: list[float] = []
    trajectory: list[list[Point2]] = [[] for _ in point_ops]
    for k in range(config.total_steps):
        current_ops = []
        for i, op in enumerate(point_ops):
            h = supervised[i]
            d = math.hypot(op.target.x - h.x, op.target.y - h.y)
            if d > 1e-9:
                step = min(config.point_step_px, d)
                h = Point2(
                    h.x + step * (op.target.x - h.x) / d,
                    h.y + step * (op.target.y - h.y) / d,
                )
            supervised[i] = h
            current_ops.append(replace(op, handle=h))
        loss, grad = point_ms_loss(
            state, current_ops, config.point_beta, config.point_lambda, extractor
        )
        if not math.isfinite(loss):
            raise EngineError(f"non-finite loss at iteration {k}: {loss}")
        alpha, step_grad = _normalized_alpha_grad(grad, config.lr_at(k), config)
        state.z = state.z - alpha * step_grad
        fz = extractor.extract(LatentField(state.z)).data
        for i, op in enumerate(point_ops):
            t = point_track(
                fz,
                state.base_feats,
                _to_feature_point(supervised[i], stride),
                op.track_radius,
                original=state.originals[i],
            )
            tracked[i] = _from_feature_point(t, stride)
            trajectory[i].append(tracked[i])
        state.prev_feats = fz
        losses.append(loss)
    return PointDragResult(
        final_z=LatentField(state.z),
        loss_trajectory=losses,
        handle_trajectory=trajectory,
        iterations_run=config.total_steps,
    )


# --- latent binary format ---------------------------------------------------


def save_latent(path, z: LatentField) -> None:
    """16-byte header (magic, u32 C/H/W little-endian) + row-major f32."""
    with open(path, "wb") as fh:
        fh.write(LATENT_MAGIC)
        fh.write(struct.pack("<III", z.channels, z.height, z.width))
        fh.write(z.data.astype("<f4").tobytes())


def latent_to_bytes(z: LatentField) -> bytes:
    return (
        LATENT_MAGIC
        + struct.pack("<III", z.channels, z.height, z.width)
        + z.data.astype("<f4").tobytes()
    )


def latent_from_bytes(blob: bytes) -> LatentField:
    if len(blob) < 16 or blob[:4] != LATENT_MAGIC:
        raise EngineError("not a latent blob (bad magic)")
    c, h, w = struct.unpack("<III", blob[4:16])
    expect = 16 + 4 * c * h * w
    if len(blob) != expect:
        raise EngineError(f"latent blob is {len(blob)} bytes, expected {expect}")
    data = np.frombuffer(blob[16:], dtype="<f4").reshape(c, h, w)
    return LatentField(data.astype(np.float64))


def load_latent(path) -> LatentField:
    with open(path, "rb") as fh:
        return latent_from_bytes(fh.read())
