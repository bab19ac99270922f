"""Diagnostic sweeps for truncation falloff and encoding error.

Two studies over single time series: how a designated peak attenuates
as the coefficient budget shrinks, and how reconstruction error behaves
before and after the opacity transfer 1 - exp(-sigma * delta), with and
without the logarithmic encoding.  Results serialize to CSV with a
fixed column set and fixed float formatting so outputs are byte-stable.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from . import encoding, fourier

CSV_COLUMNS = ("k", "peak_ratio", "l2_error", "post_transfer_l2", "variant")
DEFAULT_DELTA = 0.1


@dataclass(frozen=True)
class SweepRow:
    """One study point: coefficient budget plus its error metrics."""

    k: int
    peak_ratio: float
    l2_error: float
    post_transfer_l2: float
    variant: str = "plain"

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
        for name in ("peak_ratio", "l2_error", "post_transfer_l2"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")


def _check_signal(signal: np.ndarray) -> np.ndarray:
    signal = np.asarray(signal, dtype=np.float64)
    if signal.ndim != 1 or signal.size < 1:
        raise ValueError("signal must be a non-empty 1-D series")
    if not np.all(np.isfinite(signal)):
        raise ValueError("signal must be finite")
    return signal


def _transfer(values: np.ndarray, delta: float) -> np.ndarray:
    return -np.expm1(-np.maximum(values, 0.0) * delta)


def peak_falloff_sweep(
    signal: np.ndarray, ks: list[int], delta: float = DEFAULT_DELTA
) -> list[SweepRow]:
    """Reconstructed-peak attenuation across coefficient budgets.

    The designated peak is the series' global maximum, which must be
    positive.  ``peak_ratio`` and ``l2_error`` measure the raw truncated
    reconstruction; ``post_transfer_l2`` measures opacities, so the
    reconstruction is clipped to free space first.  Budgets must be odd
    and within [1, 2T - 1].
    """
    signal = _check_signal(signal)
    n_frames = signal.size
    if delta <= 0:
        raise ValueError("delta must be positive")
    peak = int(np.argmax(signal))
    if signal[peak] <= 0.0:
        raise ValueError("signal peak must be positive")
    limit = fourier.max_coefficients(n_frames)
    for k in ks:
        if not 1 <= k <= limit:
            raise ValueError(f"k={k} outside [1, {limit}] for {n_frames} frames")
        if k % 2 == 0:
            raise ValueError(f"k must be odd, got {k}")

    times = np.arange(n_frames)
    reference = _transfer(signal, delta)
    rows = []
    for k in ks:
        recon = fourier.reconstruct(fourier.compress(signal, k), times, n_frames)
        rows.append(
            SweepRow(
                k=int(k),
                peak_ratio=float(recon[peak] / signal[peak]),
                l2_error=float(np.linalg.norm(recon - signal)),
                post_transfer_l2=float(np.linalg.norm(_transfer(recon, delta) - reference)),
            )
        )
    return rows


def transfer_error_study(
    signal: np.ndarray, k: int, delta: float
) -> tuple[float, float, float, float]:
    """L2 errors of plain and log-encoded reconstructions.

    Both variants decode through the free-space clip; errors are
    measured on the density itself (raw) and on the opacity transfer
    1 - exp(-sigma * delta).  Returns (raw_l2, post_transfer_l2,
    log_raw_l2, log_post_transfer_l2).
    """
    signal = _check_signal(signal)
    if np.any(signal < 0):
        raise ValueError("signal must be non-negative")
    if delta <= 0:
        raise ValueError("delta must be positive")
    n_frames = signal.size
    times = np.arange(n_frames)
    reference = _transfer(signal, delta)

    plain_cfg = encoding.EncodingConfig(use_log=False, use_comp=False)
    log_cfg = encoding.EncodingConfig(use_log=True, use_comp=False)
    out = []
    for cfg in (plain_cfg, log_cfg):
        coeffs = encoding.encode_density_sequence(signal, cfg, k)
        decoded = encoding.decode_density(coeffs, times, n_frames, cfg)
        out.append(float(np.linalg.norm(decoded - signal)))
        out.append(float(np.linalg.norm(_transfer(decoded, delta) - reference)))
    return out[0], out[1], out[2], out[3]


def transfer_rows(signal: np.ndarray, k: int, delta: float) -> list[SweepRow]:
    """Transfer study as CSV-ready rows, one per encoding variant."""
    signal = _check_signal(signal)
    peak = int(np.argmax(signal))
    if signal[peak] <= 0.0:
        raise ValueError("signal peak must be positive")
    raw_l2, post_l2, log_raw_l2, log_post_l2 = transfer_error_study(signal, k, delta)

    times = np.arange(signal.size)
    rows = []
    for variant, cfg, l2, post in (
        ("plain", encoding.EncodingConfig(use_log=False, use_comp=False), raw_l2, post_l2),
        ("log", encoding.EncodingConfig(use_log=True, use_comp=False), log_raw_l2, log_post_l2),
    ):
        coeffs = encoding.encode_density_sequence(signal, cfg, k)
        decoded = encoding.decode_density(coeffs, times, signal.size, cfg)
        rows.append(
            SweepRow(
                k=int(k),
                peak_ratio=float(decoded[peak] / signal[peak]),
                l2_error=l2,
                post_transfer_l2=post,
                variant=variant,
            )
        )
    return rows


def spiky_signal(
    rng: np.random.Generator,
    n_frames: int = 60,
    n_peaks: int = 3,
    base_scale: float = 1.0,
    peak_low: float = 50.0,
    peak_high: float = 100.0,
) -> np.ndarray:
    """Non-negative series with a low base and a few tall peaks."""
    if not 1 <= n_peaks <= n_frames:
        raise ValueError("need 1 <= n_peaks <= n_frames")
    signal = rng.uniform(0.0, base_scale, n_frames)
    idx = rng.choice(n_frames, size=n_peaks, replace=False)
    signal[idx] = rng.uniform(peak_low, peak_high, n_peaks)
    return signal


def densest_series(sigma_series: np.ndarray) -> np.ndarray:
    """Time series of the leaf holding the global density maximum."""
    sigma_series = np.asarray(sigma_series, dtype=np.float64)
    if sigma_series.ndim != 2 or sigma_series.size == 0:
        raise ValueError("expected a non-empty (leaves, frames) array")
    leaf = int(np.argmax(sigma_series.max(axis=1)))
    return sigma_series[leaf].copy()


def rows_to_csv(rows: list[SweepRow]) -> str:
    """Fixed-column CSV text; floats printed with 9 significant digits."""
    buf = io.StringIO()
    buf.write(",".join(CSV_COLUMNS) + "\n")
    for row in rows:
        buf.write(
            "%d,%.9g,%.9g,%.9g,%s\n"
            % (row.k, row.peak_ratio, row.l2_error, row.post_transfer_l2, row.variant)
        )
    return buf.getvalue()
