"""Image-quality and recognition metrics: PSNR, SSIM, top-1 accuracy."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.signal import convolve2d

from .errors import ShapeError

INF = float("inf")


@dataclass
class QualityReport:
    psnr_db: float
    ssim: float
    accuracy: Optional[float] = None


def psnr(a, b, max_val: float = 1.0) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {a.shape} vs {b.shape}")
    mse = np.mean((a - b) ** 2)
    if mse == 0:
        return INF
    return float(10.0 * math.log10(max_val**2 / mse))


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(x**2) / (2.0 * sigma**2))
    g /= g.sum()
    return np.outer(g, g)


def _ssim_channel(x, y, window, c1, c2):
    def filt(z):
        return convolve2d(z, window, mode="valid")

    mu_x = filt(x)
    mu_y = filt(y)
    sxx = filt(x * x) - mu_x * mu_x
    syy = filt(y * y) - mu_y * mu_y
    sxy = filt(x * y) - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * sxy + c2)
    den = (mu_x**2 + mu_y**2 + c1) * (sxx + syy + c2)
    return float(np.mean(num / den))


def ssim(a, b, window_size: int = 11, sigma: float = 1.5, k1: float = 0.01,
         k2: float = 0.03, data_range: float = 1.0) -> float:
    """Mean SSIM over every fully-covered Gaussian window position.

    Colour images are scored per channel and averaged.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a = a[:, :, None]
        b = b[:, :, None]
    if a.shape[0] < window_size or a.shape[1] < window_size:
        raise ShapeError(f"image {a.shape[:2]} smaller than the {window_size}x{window_size} window")
    window = gaussian_window(window_size, sigma)
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    vals = [_ssim_channel(a[:, :, c], b[:, :, c], window, c1, c2) for c in range(a.shape[2])]
    return float(np.mean(vals))


def top1_accuracy(logits, labels) -> float:
    logits = np.asarray(logits)
    labels = np.asarray(labels)
    if logits.ndim != 2 or labels.ndim != 1 or logits.shape[0] != labels.shape[0]:
        raise ShapeError(f"logits {logits.shape} do not match labels {labels.shape}")
    if logits.shape[0] == 0:
        raise ShapeError("top1_accuracy needs at least one row")
    # np.argmax returns the first maximal index, i.e. ties go to the lowest class id.
    return float(np.mean(np.argmax(logits, axis=1) == labels))


def mean_psnr(outputs, targets) -> float:
    vals = [psnr(o, t) for o, t in zip(outputs, targets)]
    return float(np.mean(vals))


def mean_ssim(outputs, targets) -> float:
    return float(np.mean([ssim(o, t) for o, t in zip(outputs, targets)]))


def format_psnr(value: float) -> str:
    return "inf" if math.isinf(value) else repr(float(value))


def parse_psnr(text: str) -> float:
    return INF if text == "inf" else float(text)
