"""Density-domain encodings applied before coefficient truncation.

Two encodings tame the ringing that truncation produces on spiky density
series.  The logarithmic map compresses large amplitudes so that the
post-transfer (opacity) error shrinks; the component-dependent map
pre-amplifies deviations by the known impulse falloff so that clipped
reconstructions recover free space.  Both act at construction time only:
decoding inverts the logarithm but never the component-dependent map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fourier


@dataclass(frozen=True)
class EncodingConfig:
    """Construction-time encoding switches for density series."""

    use_log: bool = True
    use_comp: bool = True
    zero_epsilon: float = 1e-8

    def __post_init__(self) -> None:
        if not np.isfinite(self.zero_epsilon) or self.zero_epsilon < 0:
            raise ValueError(f"zero_epsilon must be finite and >= 0, got {self.zero_epsilon}")


def encode_log(values: np.ndarray) -> np.ndarray:
    """Map density to log space, ln(sigma + 1)."""
    values = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise ValueError("density values must be finite")
    if np.any(values < 0):
        raise ValueError("density values must be non-negative")
    return np.log1p(values)


def decode_log(values: np.ndarray) -> np.ndarray:
    """Inverse of :func:`encode_log`, exp(y) - 1."""
    return np.expm1(np.asarray(values, dtype=np.float64))


def scaling_ratio(n_coeffs: int, n_frames: int) -> float:
    """Peak attenuation 0.5 * (K + 1) / T for an impulse at frame 0."""
    fourier._check_k(n_coeffs, n_frames)
    return 0.5 * (n_coeffs + 1) / n_frames


def encode_comp(
    values: np.ndarray, n_coeffs: int, zero_epsilon: float = 1e-8
) -> np.ndarray:
    """Pre-amplify deviations by the inverse impulse falloff.

    Series that touch zero (any sample <= ``zero_epsilon``) are scaled
    about their mean so below-average samples land negative and clip to
    free space after reconstruction; series that never vanish are scaled
    about zero.  Operates on the last axis; the shift is per series.
    """
    values = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise ValueError("density values must be finite")
    n_frames = values.shape[-1]
    ratio = scaling_ratio(n_coeffs, n_frames)
    has_zero = np.any(values <= zero_epsilon, axis=-1, keepdims=True)
    shift = np.where(has_zero, values.mean(axis=-1, keepdims=True), 0.0)
    return (values - shift) / ratio + shift


def encode_density_sequence(
    values: np.ndarray, config: EncodingConfig, k_sigma: int
) -> np.ndarray:
    """Full construction-side chain: log map, then component map, then
    truncation to ``k_sigma`` coefficients."""
    values = np.asarray(values, dtype=np.float64)
    if config.use_log:
        values = encode_log(values)
    if config.use_comp:
        values = encode_comp(values, k_sigma, config.zero_epsilon)
    return fourier.compress(values, k_sigma)


def decode_density(
    coeffs: np.ndarray, t: int | np.ndarray, n_frames: int, config: EncodingConfig
) -> np.ndarray | float:
    """Decode density at frame ``t``: reconstruct, undo the log map if it
    was applied, and clip negatives to zero (free space).

    The component-dependent map has no decode-side inverse; its effect is
    absorbed by this clipping.
    """
    out = fourier.reconstruct(coeffs, t, n_frames)
    out = np.asarray(out, dtype=np.float64)
    if config.use_log:
        out = decode_log(out)
    out = np.maximum(out, 0.0)
    return float(out) if out.ndim == 0 else out
