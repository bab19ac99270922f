"""Truncated trigonometric transform for per-leaf time signals.

A length-T series is projected onto an interleaved cosine/sine table and
kept as its first K coefficients.  Reconstruction evaluates the series at
integer frame indices.  With K = 2T - 1 the transform is exact; smaller K
trades accuracy for storage, attenuating an isolated unit impulse by
0.5 * (K + 1) / T for odd K.

Basis index convention: even k carries cos(k*pi*t/T), odd k carries
sin((k+1)*pi*t/T).  The analysis table includes a 1/T factor; the
synthesis table is the same trigonometric table without it.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np


def max_coefficients(n_frames: int) -> int:
    """Largest usable coefficient count for a series of ``n_frames``."""
    return 2 * n_frames - 1


def _check_k(n_coeffs: int, n_frames: int) -> None:
    if n_frames < 1:
        raise ValueError(f"n_frames must be >= 1, got {n_frames}")
    if not 1 <= n_coeffs <= max_coefficients(n_frames):
        raise ValueError(
            f"n_coeffs must be in [1, {max_coefficients(n_frames)}] "
            f"for n_frames={n_frames}, got {n_coeffs}"
        )


def dft_basis(k: int, t: int, n_frames: int) -> float:
    """Analysis basis value for coefficient ``k`` at frame ``t``."""
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    if n_frames < 1:
        raise ValueError(f"n_frames must be >= 1, got {n_frames}")
    if k % 2 == 0:
        return math.cos(k * math.pi * t / n_frames) / n_frames
    return math.sin((k + 1) * math.pi * t / n_frames) / n_frames


def idft_basis(k: int, t: int, n_frames: int) -> float:
    """Synthesis basis value; the analysis value without the 1/T factor."""
    return n_frames * dft_basis(k, t, n_frames)


@functools.lru_cache(maxsize=64)
def dft_matrix(n_coeffs: int, n_frames: int) -> np.ndarray:
    """Analysis table of shape (K, T), cached and read-only."""
    _check_k(n_coeffs, n_frames)
    k = np.arange(n_coeffs, dtype=np.float64)[:, None]
    t = np.arange(n_frames, dtype=np.float64)[None, :]
    even = np.cos(k * np.pi * t / n_frames)
    odd = np.sin((k + 1) * np.pi * t / n_frames)
    table = np.where(k % 2 == 0, even, odd) / n_frames
    table.setflags(write=False)
    return table


@functools.lru_cache(maxsize=64)
def idft_matrix(n_coeffs: int, n_frames: int) -> np.ndarray:
    """Synthesis table of shape (K, T), cached and read-only."""
    table = n_frames * dft_matrix(n_coeffs, n_frames)
    table.setflags(write=False)
    return table


def compress(values: np.ndarray, n_coeffs: int) -> np.ndarray:
    """Project time series onto the first ``n_coeffs`` basis rows.

    ``values`` holds series along the last axis; the result replaces that
    axis with a coefficient axis of length ``n_coeffs``.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.shape[-1] < 1:
        raise ValueError("signal must contain at least one frame")
    if not np.all(np.isfinite(values)):
        raise ValueError("signal values must be finite")
    n_frames = values.shape[-1]
    _check_k(n_coeffs, n_frames)
    return values @ dft_matrix(n_coeffs, n_frames).T


def reconstruct(coeffs: np.ndarray, t: int | np.ndarray, n_frames: int) -> np.ndarray | float:
    """Evaluate compressed series at frame index ``t``.

    ``coeffs`` holds coefficients along the last axis.  ``t`` may be a
    scalar or an array of frame indices; scalar in, scalar out for 1-D
    coefficients.
    """
    coeffs = np.asarray(coeffs, dtype=np.float64)
    n_coeffs = coeffs.shape[-1]
    _check_k(n_coeffs, n_frames)
    table = idft_matrix(n_coeffs, n_frames)
    scalar = np.isscalar(t) and coeffs.ndim == 1
    columns = table[:, np.asarray(t)]
    out = coeffs @ columns
    return float(out) if scalar else out


@dataclass(frozen=True)
class FourierCoeffs:
    """Compressed series plus the frame count needed to decode it."""

    coeffs: np.ndarray
    n_frames: int

    def reconstruct(self, t: int | np.ndarray) -> np.ndarray | float:
        return reconstruct(self.coeffs, t, self.n_frames)


def compress_series(values: np.ndarray, n_coeffs: int) -> FourierCoeffs:
    return FourierCoeffs(compress(values, n_coeffs), np.asarray(values).shape[-1])
