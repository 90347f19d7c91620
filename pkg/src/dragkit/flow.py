"""Forward (inversion) and backward (denoising) steps for two solver
families: straight-path velocity ODEs integrated by explicit Euler, and
deterministic noise-schedule steps, plus round-trip drift measurement on
synthetic predictors.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Protocol

import numpy as np

from .metrics import mae as _mae
from .metrics import psnr as _psnr
from .metrics import ssim as _ssim

PSNR_CAP_DB = 200.0  # sentinel for exact recovery


class FlowError(ValueError):
    pass


@dataclass(frozen=True)
class LatentField:
    """Real-valued C x H x W grid; immutable after construction."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 3:
            raise FlowError("latent field must be C x H x W")
        if not np.all(np.isfinite(arr)):
            raise FlowError("latent field must be finite")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @classmethod
    def zeros(cls, channels: int, width: int, height: int) -> "LatentField":
        return cls(np.zeros((channels, height, width)))

    @classmethod
    def full(cls, channels: int, width: int, height: int, value: float) -> "LatentField":
        return cls(np.full((channels, height, width), float(value)))


class VelocityPredictor(Protocol):
    def evaluate(self, z: LatentField, t: float) -> LatentField: ...


class NoisePredictor(Protocol):
    def evaluate(self, z: LatentField, t: int) -> LatentField: ...


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step noise fractions; the cumulative signal level must decrease."""

    betas: tuple[float, ...]

    def __post_init__(self):
        if len(self.betas) < 1:
            raise FlowError("schedule needs at least one step")
        for b in self.betas:
            if not (0.0 < b < 1.0):
                raise FlowError(f"every beta must lie in (0, 1), got {b}")
        object.__setattr__(self, "_alpha_bar", np.cumprod([1.0 - b for b in self.betas]))
        ab = self.alpha_bars
        if not (np.all(ab > 0.0) and np.all(ab <= 1.0) and np.all(np.diff(ab) < 0)):
            raise FlowError("cumulative signal level must be strictly decreasing in (0, 1]")

    @property
    def T(self) -> int:
        return len(self.betas)

    @property
    def alpha_bars(self) -> np.ndarray:
        return self._alpha_bar  # type: ignore[attr-defined]

    def alpha_bar(self, t: int) -> float:
        """Cumulative product up to step t, with the t = 0 boundary fixed at 1."""
        if t == 0:
            return 1.0
        if not 1 <= t <= self.T:
            raise FlowError(f"step {t} outside [0, {self.T}]")
        return float(self.alpha_bars[t - 1])


# --- velocity-ODE (straight-path) steps -----------------------------------


def rf_forward_step(z: LatentField, t: float, dt: float, v: VelocityPredictor) -> LatentField:
    """One explicit Euler step of dz/dt toward noise: z + dt * v(z, t)."""
    if dt <= 0:
        raise FlowError("dt must be positive")
    if t < 0 or t + dt > 1 + 1e-12:
        raise FlowError(f"step [{t}, {t + dt}] leaves [0, 1]")
    vel = v.evaluate(z, t)
    return LatentField(z.data + dt * vel.data)


def rf_backward_step(z: LatentField, t: float, dt: float, v: VelocityPredictor) -> LatentField:
    """One explicit Euler step back toward data: z - dt * v(z, t)."""
    if dt <= 0:
        raise FlowError("dt must be positive")
    if t - dt < -1e-12 or t > 1 + 1e-12:
        raise FlowError(f"step [{t - dt}, {t}] leaves [0, 1]")
    vel = v.evaluate(z, t)
    return LatentField(z.data - dt * vel.data)


# --- deterministic noise-schedule steps ------------------------------------


def ddim_invert_step(
    z_prev: LatentField, t: int, sched: NoiseSchedule, eps: NoisePredictor
) -> LatentField:
    """Map the step t-1 latent to step t.

    The clean latent implied by z_prev is estimated with the predictor at
    (z_prev, t-1) and re-noised at level t using the same noise estimate.
    """
    if not 1 <= t <= sched.T:
        raise FlowError(f"step {t} outside [1, {sched.T}]")
    ab_prev = sched.alpha_bar(t - 1)
    ab_t = sched.alpha_bar(t)
    e = eps.evaluate(z_prev, t - 1)
    z0_hat = (z_prev.data - math.sqrt(1.0 - ab_prev) * e.data) / math.sqrt(ab_prev)
    return LatentField(math.sqrt(ab_t) * z0_hat + math.sqrt(1.0 - ab_t) * e.data)


def ddim_denoise_step(
    z_t: LatentField, t: int, sched: NoiseSchedule, eps: NoisePredictor
) -> LatentField:
    """Map the step t latent to step t-1 (deterministic denoising)."""
    if not 1 <= t <= sched.T:
        raise FlowError(f"step {t} outside [1, {sched.T}]")
    ab_t = sched.alpha_bar(t)
    ab_prev = sched.alpha_bar(t - 1)
    if ab_t <= 0:
        raise FlowError("signal level must be positive")
    e = eps.evaluate(z_t, t)
    z0_hat = (z_t.data - math.sqrt(1.0 - ab_t) * e.data) / math.sqrt(ab_t)
    return LatentField(math.sqrt(ab_prev) * z0_hat + math.sqrt(1.0 - ab_prev) * e.data)


# --- synthetic predictors ---------------------------------------------------


@dataclass(frozen=True)
class ConstantVelocity:
    """v(z, t) == value everywhere; the straight-path ideal."""

    value: float = 1.0

    def evaluate(self, z: LatentField, t: float) -> LatentField:
        return LatentField(np.full_like(z.data, self.value))


@dataclass(frozen=True)
class FieldVelocity:
    """v(z, t) = fn(z.data, t) for an arbitrary numpy-valued function."""

    fn: Callable[[np.ndarray, float], np.ndarray]

    def evaluate(self, z: LatentField, t: float) -> LatentField:
        return LatentField(np.asarray(self.fn(z.data, t), dtype=np.float64))


def sin_velocity() -> FieldVelocity:
    """A smooth nonlinear field, v(z, t) = sin(z); Euler error is first order."""
    return FieldVelocity(lambda z, t: np.sin(z))


@dataclass(frozen=True)
class LinearNoisePredictor:
    """eps(z, t) = scale * z. Not consistent along its own trajectory, so
    invert-then-denoise visibly drifts; useful for drift demonstrations."""

    scale: float = 0.5

    def evaluate(self, z: LatentField, t: int) -> LatentField:
        return LatentField(self.scale * z.data)


@dataclass(frozen=True)
class SelfConsistentLinearPredictor:
    """Linear predictor whose noise estimate is a fixed fraction of the
    implied clean latent: eps(z, t) = c * z / (sqrt(ab_t) + c * sqrt(1 - ab_t)).

    Along any trajectory the estimate is unchanged step to step, so
    invert-then-denoise recovers the input to machine precision.
    """

    sched: NoiseSchedule
    scale: float = 0.5

    def evaluate(self, z: LatentField, t: int) -> LatentField:
        ab = self.sched.alpha_bar(t)
        denom = math.sqrt(ab) + self.scale * math.sqrt(1.0 - ab)
        return LatentField(self.scale * z.data / denom)


# --- round-trip drift -------------------------------------------------------


@dataclass(frozen=True)
class DriftReport:
    ssim: float
    psnr_db: float
    mae: float
    steps: int
    solver: str

    def to_json(self) -> str:
        return json.dumps(
            {
                "ssim": self.ssim,
                "psnr_db": self.psnr_db,
                "mae": self.mae,
                "steps": self.steps,
                "solver": self.solver,
            }
        )


def rf_invert(z0: LatentField, steps: int, v: VelocityPredictor) -> LatentField:
    dt = 1.0 / steps
    z = z0
    for i in range(steps):
        z = rf_forward_step(z, i * dt, dt, v)
    return z


def rf_denoise(z1: LatentField, steps: int, v: VelocityPredictor) -> LatentField:
    dt = 1.0 / steps
    z = z1
    for i in range(steps, 0, -1):
        z = rf_backward_step(z, i * dt, dt, v)
    return z


def roundtrip_drift(
    z0: LatentField,
    steps: int,
    solver: str,
    predictor,
    sched: NoiseSchedule | None = None,
) -> DriftReport:
    """Invert z0 fully, denoise back, and report the reconstruction drift.

    solver "rf" integrates the velocity ODE over [0, 1] with `steps` Euler
    steps; solver "ddim" walks the full noise schedule (steps must equal
    the schedule length).
    """
    if steps < 1:
        raise FlowError("steps must be >= 1")
    if solver == "rf":
        noisy = rf_invert(z0, steps, predictor)
        recon = rf_denoise(noisy, steps, predictor)
    elif solver == "ddim":
        if sched is None:
            raise FlowError("ddim solver needs a noise schedule")
        if steps != sched.T:
            raise FlowError("ddim steps must match the schedule length")
        z = z0
        for t in range(1, sched.T + 1):
            z = ddim_invert_step(z, t, sched, predictor)
        for t in range(sched.T, 0, -1):
            z = ddim_denoise_step(z, t, sched, predictor)
        recon = z
    else:
        raise FlowError(f"unknown solver {solver!r}")

    a, b = z0.data, recon.data
    return DriftReport(
        ssim=_ssim(a, b),
        psnr_db=min(_psnr(a, b), PSNR_CAP_DB),
        mae=_mae(a, b),
        steps=steps,
        solver=solver,
    )
