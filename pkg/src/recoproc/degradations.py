"""Corruption operators producing processor inputs.

Images are ``H x W x C`` float arrays in ``[0, 1]``.  Every operator returns
a clipped float32 array.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Optional

import numpy as np
from PIL import Image

from .errors import InvalidParam, ShapeError

SUPER_RESOLUTION = "super_resolution"
GAUSSIAN_NOISE = "gaussian_noise"
JPEG = "jpeg"
KINDS = (SUPER_RESOLUTION, GAUSSIAN_NOISE, JPEG)

_KIND_ALIASES = {
    "sr": SUPER_RESOLUTION,
    "super-resolution": SUPER_RESOLUTION,
    "noise": GAUSSIAN_NOISE,
    "denoise": GAUSSIAN_NOISE,
    "denoising": GAUSSIAN_NOISE,
    "gaussian-noise": GAUSSIAN_NOISE,
    "deblock": JPEG,
    "jpeg-deblocking": JPEG,
}

BICUBIC_A = -0.5


def canonical_kind(kind: str) -> str:
    k = _KIND_ALIASES.get(kind, kind)
    if k not in KINDS:
        raise InvalidParam(f"unknown degradation kind {kind!r}; expected one of {KINDS}")
    return k


@dataclass(frozen=True)
class DegradationSpec:
    """One corruption with only the parameters of its kind set.

    Use :meth:`make` to get the default parameters (scale 4, sigma 0.1,
    quality 10).
    """

    kind: str
    scale: Optional[int] = None
    sigma: Optional[float] = None
    quality: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", canonical_kind(self.kind))
        owned = {SUPER_RESOLUTION: "scale", GAUSSIAN_NOISE: "sigma", JPEG: "quality"}[self.kind]
        for name in ("scale", "sigma", "quality"):
            value = getattr(self, name)
            if name == owned and value is None:
                raise InvalidParam(f"{self.kind} requires {name}")
            if name != owned and value is not None:
                raise InvalidParam(f"{name} is not a parameter of {self.kind}")
        if self.kind == SUPER_RESOLUTION:
            if int(self.scale) != self.scale or self.scale < 2:
                raise InvalidParam(f"scale must be an integer >= 2, got {self.scale}")
            object.__setattr__(self, "scale", int(self.scale))
        elif self.kind == GAUSSIAN_NOISE:
            if not 0.0 <= float(self.sigma) <= 1.0:
                raise InvalidParam(f"sigma must lie in [0, 1], got {self.sigma}")
            object.__setattr__(self, "sigma", float(self.sigma))
        else:
            if int(self.quality) != self.quality or not 1 <= self.quality <= 100:
                raise InvalidParam(f"quality must be an integer in [1, 100], got {self.quality}")
            object.__setattr__(self, "quality", int(self.quality))

    @classmethod
    def make(cls, kind, scale=None, sigma=None, quality=None):
        kind = canonical_kind(kind)
        if kind == SUPER_RESOLUTION:
            return cls(kind, scale=4 if scale is None else scale)
        if kind == GAUSSIAN_NOISE:
            return cls(kind, sigma=0.1 if sigma is None else sigma)
        return cls(kind, quality=10 if quality is None else quality)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        unknown = set(d) - {"kind", "scale", "sigma", "quality"}
        if unknown:
            raise InvalidParam(f"unknown degradation fields: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self):
        d = {"kind": self.kind}
        for name in ("scale", "sigma", "quality"):
            if getattr(self, name) is not None:
                d[name] = getattr(self, name)
        return d

    @property
    def upscale(self) -> int:
        """Spatial factor a processor must apply to this kind's inputs."""
        return self.scale if self.kind == SUPER_RESOLUTION else 1


def _bicubic(x):
    a = BICUBIC_A
    x = np.abs(x)
    out = np.zeros_like(x)
    near = x < 1.0
    far = (x >= 1.0) & (x < 2.0)
    xn = x[near]
    xf = x[far]
    out[near] = ((a + 2.0) * xn - (a + 3.0)) * xn * xn + 1.0
    out[far] = (((xf - 5.0) * xf + 8.0) * xf - 4.0) * a
    return out


def resample_weights(in_size: int, out_size: int) -> np.ndarray:
    """Row-stochastic ``out_size x in_size`` bicubic resampling matrix.

    When shrinking, the kernel support is stretched by the scale factor
    (antialias prefilter).  Taps falling outside the image are dropped and
    the remaining weights renormalised.
    """
    scale = in_size / out_size
    filterscale = max(scale, 1.0)
    support = 2.0 * filterscale
    weights = np.zeros((out_size, in_size), dtype=np.float64)
    for i in range(out_size):
        center = (i + 0.5) * scale
        lo = max(int(center - support + 0.5), 0)
        hi = min(int(center + support + 0.5), in_size)
        taps = np.arange(lo, hi)
        w = _bicubic((taps - center + 0.5) / filterscale)
        total = w.sum()
        if total != 0.0:
            w = w / total
        weights[i, lo:hi] = w
    return weights


def resize_bicubic(img, out_h: int, out_w: int) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        img = img[:, :, None]
    h, w = img.shape[:2]
    wy = resample_weights(h, out_h)
    wx = resample_weights(w, out_w)
    out = np.einsum("ih,hwc,jw->ijc", wy, img, wx, optimize=True)
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def downsample_bicubic(img, scale: int) -> np.ndarray:
    img = np.asarray(img)
    if scale < 1:
        raise InvalidParam(f"scale must be >= 1, got {scale}")
    h, w = img.shape[:2]
    if h % scale or w % scale:
        raise ShapeError(f"image {h}x{w} is not divisible by scale {scale}")
    if scale == 1:
        return np.clip(img, 0.0, 1.0).astype(np.float32)
    return resize_bicubic(img, h // scale, w // scale)


def upsample_bicubic(img, scale: int) -> np.ndarray:
    img = np.asarray(img)
    if scale < 1:
        raise InvalidParam(f"scale must be >= 1, got {scale}")
    if scale == 1:
        return np.clip(img, 0.0, 1.0).astype(np.float32)
    h, w = img.shape[:2]
    return resize_bicubic(img, h * scale, w * scale)


def add_gaussian_noise(img, sigma: float, rng: np.random.Generator) -> np.ndarray:
    if sigma < 0:
        raise InvalidParam(f"sigma must be >= 0, got {sigma}")
    img = np.asarray(img, dtype=np.float32)
    if sigma == 0:
        return np.clip(img, 0.0, 1.0)
    noise = rng.standard_normal(img.shape) * sigma
    return np.clip(img + noise, 0.0, 1.0).astype(np.float32)


def to_uint8(img) -> np.ndarray:
    return np.round(np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0) * 255.0).astype(np.uint8)


def from_uint8(arr) -> np.ndarray:
    return (np.asarray(arr, dtype=np.float32) / 255.0).astype(np.float32)


def jpeg_roundtrip(img, quality: int) -> np.ndarray:
    """Baseline JPEG encode/decode with 4:2:0 chroma subsampling."""
    if int(quality) != quality or not 1 <= quality <= 100:
        raise InvalidParam(f"quality must be an integer in [1, 100], got {quality}")
    buf = io.BytesIO()
    Image.fromarray(to_uint8(img), mode="RGB").save(
        buf, format="JPEG", quality=int(quality), subsampling=2, optimize=False
    )
    buf.seek(0)
    with Image.open(buf) as decoded:
        return from_uint8(np.array(decoded.convert("RGB")))


def apply(spec: DegradationSpec, img, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    if spec.kind == SUPER_RESOLUTION:
        return downsample_bicubic(img, spec.scale)
    if spec.kind == GAUSSIAN_NOISE:
        if rng is None and spec.sigma > 0:
            raise InvalidParam("gaussian_noise needs an rng stream")
        return add_gaussian_noise(img, spec.sigma, rng)
    return jpeg_roundtrip(img, spec.quality)


def no_processing(spec: DegradationSpec, degraded) -> np.ndarray:
    """Baseline reconstruction: bicubic interpolation for SR, identity otherwise."""
    if spec.kind == SUPER_RESOLUTION:
        return upsample_bicubic(degraded, spec.scale)
    return np.clip(np.asarray(degraded, dtype=np.float32), 0.0, 1.0)
