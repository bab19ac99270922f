"""Real spherical harmonics through degree 2 (9 basis values).

Constants and sign conventions follow the ubiquitous real-SH tables used
by sparse-voxel renderers, so coefficient payloads interoperate with that
ecosystem.  Colour is stored per channel as 9 coefficients and evaluated
as sigmoid(dot(coeffs, basis(direction))).
"""

from __future__ import annotations

import numpy as np
from numba import njit

SH_DIM = 9

SH_C0 = 0.28209479177387814
SH_C1 = 0.4886025119029199
SH_C2 = (
    1.0925484305920792,
    -1.0925484305920792,
    0.31539156525252005,
    -1.0925484305920792,
    0.5462742152960396,
)


def eval_sh_basis(directions: np.ndarray) -> np.ndarray:
    """Basis values for unit direction(s); output shape (..., 9)."""
    directions = np.asarray(directions, dtype=np.float64)
    x, y, z = directions[..., 0], directions[..., 1], directions[..., 2]
    out = np.empty(directions.shape[:-1] + (SH_DIM,), dtype=np.float64)
    out[..., 0] = SH_C0
    out[..., 1] = -SH_C1 * y
    out[..., 2] = SH_C1 * z
    out[..., 3] = -SH_C1 * x
    out[..., 4] = SH_C2[0] * x * y
    out[..., 5] = SH_C2[1] * y * z
    out[..., 6] = SH_C2[2] * (2.0 * z * z - x * x - y * y)
    out[..., 7] = SH_C2[3] * x * z
    out[..., 8] = SH_C2[4] * (x * x - y * y)
    return out


def eval_sh(coeffs: np.ndarray, direction: np.ndarray) -> np.ndarray:
    """Contract SH coefficients (..., 9) with the basis at ``direction``."""
    basis = eval_sh_basis(direction)
    return np.einsum("...i,...i->...", np.asarray(coeffs, dtype=np.float64), basis)


@njit(cache=True)
def sh_basis_into(dx: float, dy: float, dz: float, out: np.ndarray) -> None:
    """Kernel-side basis fill; ``out`` must have length 9."""
    out[0] = SH_C0
    out[1] = -SH_C1 * dy
    out[2] = SH_C1 * dz
    out[3] = -SH_C1 * dx
    out[4] = 1.0925484305920792 * dx * dy
    out[5] = -1.0925484305920792 * dy * dz
    out[6] = 0.31539156525252005 * (2.0 * dz * dz - dx * dx - dy * dy)
    out[7] = -1.0925484305920792 * dx * dz
    out[8] = 0.5462742152960396 * (dx * dx - dy * dy)
