"""Image quality metrics: PSNR and mean local SSIM.

Both operate on float images in [0, 1] with matching shapes.  PSNR of
identical images is reported as the +inf sentinel rather than raising.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import convolve1d

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _check_pair(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def psnr(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    a, b = _check_pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def _gaussian_taps(window: int, sigma: float) -> np.ndarray:
    x = np.arange(window) - (window - 1) / 2.0
    taps = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return taps / taps.sum()


def _window_mean(x: np.ndarray, taps: np.ndarray) -> np.ndarray:
    # Separable filter; cropping the borders afterwards leaves exactly the
    # positions where the window fit entirely inside the image.
    half = len(taps) // 2
    out = convolve1d(x, taps, axis=0, mode="constant")
    out = convolve1d(out, taps, axis=1, mode="constant")
    return out[half:-half, half:-half]


def ssim(a: np.ndarray, b: np.ndarray, data_range: float = 1.0) -> float:
    """Mean SSIM over valid 11x11 Gaussian windows, averaged per channel."""
    a, b = _check_pair(a, b)
    if a.ndim == 2:
        a = a[:, :, None]
        b = b[:, :, None]
    if min(a.shape[0], a.shape[1]) < SSIM_WINDOW:
        raise ValueError(f"images must be at least {SSIM_WINDOW} pixels per side")
    taps = _gaussian_taps(SSIM_WINDOW, SSIM_SIGMA)
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2

    values = []
    for ch in range(a.shape[2]):
        x, y = a[:, :, ch], b[:, :, ch]
        mu_x = _window_mean(x, taps)
        mu_y = _window_mean(y, taps)
        var_x = _window_mean(x * x, taps) - mu_x * mu_x
        var_y = _window_mean(y * y, taps) - mu_y * mu_y
        cov = _window_mean(x * y, taps) - mu_x * mu_y
        num = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
        den = (mu_x**2 + mu_y**2 + c1) * (var_x + var_y + c2)
        values.append(float(np.mean(num / den)))
    return float(np.mean(values))


@dataclass(frozen=True)
class MetricReport:
    """Per-frame PSNR/SSIM plus their means over the evaluated set."""

    frames: tuple[int, ...]
    psnr_per_frame: tuple[float, ...]
    ssim_per_frame: tuple[float, ...]

    @property
    def mean_psnr(self) -> float:
        finite = [p for p in self.psnr_per_frame if math.isfinite(p)]
        if not finite:
            return math.inf
        if len(finite) < len(self.psnr_per_frame):
            return math.inf
        return float(np.mean(finite))

    @property
    def mean_ssim(self) -> float:
        return float(np.mean(self.ssim_per_frame))


def report_from_pairs(frames, pairs) -> MetricReport:
    """Build a MetricReport from (rendered, reference) image pairs."""
    psnrs, ssims = [], []
    for rendered, reference in pairs:
        psnrs.append(psnr(rendered, reference))
        ssims.append(ssim(rendered, reference))
    return MetricReport(tuple(int(f) for f in frames), tuple(psnrs), tuple(ssims))
