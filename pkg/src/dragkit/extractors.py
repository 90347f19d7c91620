"""Differentiable feature extractors with exact adjoints.

The provided family is linear and spans a granularity axis: Identity keeps
every latent cell as its own feature (fine, narrow receptive field),
GaussianBlur mixes a neighborhood, and PooledBlur compresses the grid by
average pooling before blurring (broad receptive field per feature cell).
All use periodic boundaries so the adjoint of a blur is the blur itself
and constants are preserved exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Protocol

import numpy as np
from scipy.ndimage import convolve1d

from .flow import LatentField


class ExtractorError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureField:
    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 3:
            raise ExtractorError("feature field must be C x H x W")
        if not np.all(np.isfinite(arr)):
            raise ExtractorError("feature field must be finite")
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


class Descriptor(NamedTuple):
    name: str
    receptive_field_radius: int  # latent cells influencing one feature cell
    stride: int
    linear: bool = True


class FeatureExtractor(Protocol):
    descriptor: Descriptor

    def extract(self, z: LatentField) -> FeatureField: ...

    def adjoint(self, g: FeatureField, z: LatentField) -> LatentField: ...


def _gauss_kernel(sigma: float) -> np.ndarray:
    radius = max(1, math.ceil(3.0 * sigma))
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (xs / sigma) ** 2)
    return k / k.sum()


def _blur(data: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    out = convolve1d(data, kernel, axis=-1, mode="wrap")
    return convolve1d(out, kernel, axis=-2, mode="wrap")


@dataclass(frozen=True)
class Identity:
    descriptor: Descriptor = Descriptor("identity", 0, 1)

    def extract(self, z: LatentField) -> FeatureField:
        return FeatureField(z.data)

    def adjoint(self, g: FeatureField, z: LatentField) -> LatentField:
        if g.data.shape != z.data.shape:
            raise ExtractorError("gradient shape does not match the latent")
        return LatentField(g.data)


class GaussianBlur:
    """Separable normalized Gaussian, periodic boundary; self-adjoint."""

    def __init__(self, sigma: float):
        if sigma <= 0:
            raise ExtractorError("sigma must be positive")
        self.sigma = sigma
        self.kernel = _gauss_kernel(sigma)
        radius = (len(self.kernel) - 1) // 2
        self.descriptor = Descriptor(f"gaussian(sigma={sigma:g})", radius, 1)

    def extract(self, z: LatentField) -> FeatureField:
        if z.width < len(self.kernel) or z.height < len(self.kernel):
            raise ExtractorError("field smaller than the blur kernel")
        return FeatureField(_blur(z.data, self.kernel))

    def adjoint(self, g: FeatureField, z: LatentField) -> LatentField:
        if g.data.shape != z.data.shape:
            raise ExtractorError("gradient shape does not match the latent")
        return LatentField(_blur(g.data, self.kernel))


class PooledBlur:
    """Average-pool by `stride`, then blur the pooled grid.

    One feature cell aggregates a stride x stride block smeared by the
    kernel, giving the compressed, wide-receptive-field end of the
    granularity axis.
    """

    def __init__(self, stride: int, sigma: float = 0.0):
        if stride < 2:
            raise ExtractorError("stride must be >= 2")
        if sigma < 0:
            raise ExtractorError("sigma must be >= 0")
        self.stride = stride
        self.sigma = sigma
        self.kernel = _gauss_kernel(sigma) if sigma > 0 else None
        blur_radius = (len(self.kernel) - 1) // 2 if self.kernel is not None else 0
        rf = (stride * (2 * blur_radius + 1) - 1) // 2
        self.descriptor = Descriptor(
            f"pooled(stride={stride},sigma={sigma:g})", rf, stride
        )

    def _check(self, z: LatentField) -> None:
        if z.width % self.stride or z.height % self.stride:
            raise ExtractorError(
                f"field {z.width}x{z.height} not divisible by stride {self.stride}"
            )
        if self.kernel is not None and (
            z.width // self.stride < len(self.kernel)
            or z.height // self.stride < len(self.kernel)
        ):
            raise ExtractorError("pooled grid smaller than the blur kernel")

    def extract(self, z: LatentField) -> FeatureField:
        self._check(z)
        s = self.stride
        c, h, w = z.data.shape
        pooled = z.data.reshape(c, h // s, s, w // s, s).mean(axis=(2, 4))
        if self.kernel is not None:
            pooled = _blur(pooled, self.kernel)
        return FeatureField(pooled)

    def adjoint(self, g: FeatureField, z: LatentField) -> LatentField:
        self._check(z)
        s = self.stride
        c, h, w = z.data.shape
        if g.data.shape != (c, h // s, w // s):
            raise ExtractorError("gradient shape does not match the pooled grid")
        gg = _blur(g.data, self.kernel) if self.kernel is not None else g.data
        up = np.repeat(np.repeat(gg, s, axis=1), s, axis=2) / (s * s)
        return LatentField(up)


def build_extractor(spec: str | dict) -> FeatureExtractor:
    """Construct an extractor from a config value.

    Accepts "identity", or a dict like {"name": "gaussian", "sigma": 2.0}
    or {"name": "pooled", "stride": 2, "sigma": 1.0}.
    """
    if isinstance(spec, str):
        spec = {"name": spec}
    name = spec.get("name")
    if name == "identity":
        return Identity()
    if name == "gaussian":
        return GaussianBlur(float(spec.get("sigma", 2.0)))
    if name == "pooled":
        return PooledBlur(int(spec.get("stride", 2)), float(spec.get("sigma", 1.0)))
    raise ExtractorError(f"unknown extractor {name!r}")


def fd_gradient_check(
    extractor: FeatureExtractor,
    loss_fn: Callable[[FeatureExtractor, LatentField], tuple[float, LatentField]],
    z: LatentField,
    delta: float,
    num_coords: int = 64,
    coords: np.ndarray | None = None,
    seed: int = 0,
) -> float:
    """Max relative error between the analytic gradient and central finite
    differences over a random subset of coordinates (at least 64 by default).

    `loss_fn(extractor, z)` must return (loss value, gradient w.r.t. z).
    """
    if delta <= 0:
        raise ExtractorError("delta must be positive")
    _, grad = loss_fn(extractor, z)
    flat = z.data.ravel()
    n = flat.size
    if coords is None:
        rng = np.random.default_rng(seed)
        k = min(max(num_coords, 64), n)
        coords = rng.choice(n, size=k, replace=False)
    worst = 0.0
    for idx in np.asarray(coords, dtype=np.int64):
        bump = np.zeros(n)
        bump[idx] = delta
        zp = LatentField((flat + bump).reshape(z.data.shape))
        zm = LatentField((flat - bump).reshape(z.data.shape))
        lp, _ = loss_fn(extractor, zp)
        lm, _ = loss_fn(extractor, zm)
        fd = (lp - lm) / (2.0 * delta)
        an = float(grad.data.ravel()[idx])
        denom = max(abs(fd), abs(an))
        if denom < 1e-9:
            continue
        worst = max(worst, abs(fd - an) / denom)
    return worst
