"""Per-frame trees, structural union, and assembly into a Fourier tree.

A per-frame tree stores one density and one 9x3 SH coefficient block per
leaf.  Assembly unifies the frame structures, gathers each unified leaf's
time series (absent frames contribute zero), optionally duplicates the
first and last frame to soften endpoint ringing, applies the configured
density encodings, and truncates everything to Fourier coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import encoding, fourier
from .encoding import EncodingConfig
from .sh import SH_DIM
from .structure import (
    EMPTY,
    OctreeStructure,
    map_leaves,
    structure_from_voxels,
    unify_structures,
)

OCCUPANCY_THRESHOLD = 1e-4


@dataclass
class FramePlenOctree:
    """Snapshot tree for a single time step."""

    structure: OctreeStructure
    center: np.ndarray
    half_extent: float
    sigma: np.ndarray  # (leaf_count,) float32
    sh: np.ndarray  # (leaf_count, SH_DIM * 3) float32

    def __post_init__(self) -> None:
        self.center = np.asarray(self.center, dtype=np.float64)
        if self.half_extent <= 0:
            raise ValueError("half_extent must be positive")
        n = self.structure.leaf_count
        self.sigma = np.asarray(self.sigma, dtype=np.float32).reshape(n)
        self.sh = np.asarray(self.sh, dtype=np.float32).reshape(n, SH_DIM * 3)

    @property
    def box_min(self) -> np.ndarray:
        return self.center - self.half_extent

    @property
    def box_size(self) -> float:
        return 2.0 * self.half_extent


def build_frame_octree(
    sample_fn,
    center,
    half_extent: float,
    max_depth: int,
    occupancy_threshold: float = OCCUPANCY_THRESHOLD,
) -> FramePlenOctree:
    """Sample a density/SH field oracle at voxel centers.

    ``sample_fn(points)`` maps (N, 3) world positions to a density array
    (N,) and an SH coefficient array (N, 9, 3).  A voxel becomes a leaf
    iff its center density exceeds ``occupancy_threshold``.  Sampling runs
    in slabs to bound memory at high depth.
    """
    center = np.asarray(center, dtype=np.float64)
    if half_extent <= 0:
        raise ValueError("half_extent must be positive")
    res = 1 << max_depth
    cell = 2.0 * half_extent / res
    axis = center[None, :] - half_extent + cell * (np.arange(res) + 0.5)[:, None]

    voxels = []
    sigmas = []
    shs = []
    gy, gz = np.meshgrid(np.arange(res), np.arange(res), indexing="ij")
    gy = gy.ravel()
    gz = gz.ravel()
    for i in range(res):
        pts = np.empty((res * res, 3), dtype=np.float64)
        pts[:, 0] = axis[i, 0]
        pts[:, 1] = axis[gy, 1]
        pts[:, 2] = axis[gz, 2]
        sigma, sh = sample_fn(pts)
        sigma = np.asarray(sigma, dtype=np.float64).reshape(res * res)
        if not np.all(np.isfinite(sigma)):
            raise ValueError("field oracle returned non-finite density")
        keep = sigma > occupancy_threshold
        if not np.any(keep):
            continue
        sh = np.asarray(sh, dtype=np.float64).reshape(res * res, SH_DIM, 3)[keep]
        if not np.all(np.isfinite(sh)):
            raise ValueError("field oracle returned non-finite SH coefficients")
        ijk = np.empty((int(keep.sum()), 3), dtype=np.int64)
        ijk[:, 0] = i
        ijk[:, 1] = gy[keep]
        ijk[:, 2] = gz[keep]
        voxels.append(ijk)
        sigmas.append(sigma[keep])
        shs.append(sh.reshape(-1, SH_DIM * 3))

    if voxels:
        ijk = np.concatenate(voxels)
        sigma = np.concatenate(sigmas)
        sh = np.concatenate(shs)
    else:
        ijk = np.empty((0, 3), dtype=np.int64)
        sigma = np.empty(0)
        sh = np.empty((0, SH_DIM * 3))

    structure = structure_from_voxels(ijk, max_depth)
    # structure_from_voxels sorts by Morton code; realign the payload.
    from .structure import morton_encode

    order = np.argsort(morton_encode(ijk, max_depth)) if len(ijk) else np.empty(0, int)
    return FramePlenOctree(
        structure, center, half_extent, sigma[order].astype(np.float32), sh[order].astype(np.float32)
    )


@dataclass
class FourierPlenOctree:
    """Octree whose leaves hold truncated Fourier coefficients over time.

    ``n_frames`` counts renderable data frames.  When ``padded`` the
    coefficient basis spans n_frames + 2 internal frames and data frame t
    decodes at internal index t + 1.
    """

    structure: OctreeStructure
    n_frames: int
    k_sigma: int
    k_sh: int
    config: EncodingConfig
    padded: bool
    half_extent: float
    centers: np.ndarray  # (n_frames, 3) float64
    omega_sigma: np.ndarray  # (leaf_count, k_sigma) float32
    omega_sh: np.ndarray  # (leaf_count, SH_DIM * 3, k_sh) float32
    _frame_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.n_frames < 1:
            raise ValueError("n_frames must be >= 1")
        basis = self.basis_frames
        for name, k in (("k_sigma", self.k_sigma), ("k_sh", self.k_sh)):
            if not 1 <= k <= fourier.max_coefficients(basis):
                raise ValueError(
                    f"{name}={k} out of range [1, {fourier.max_coefficients(basis)}]"
                )
        if self.half_extent <= 0:
            raise ValueError("half_extent must be positive")
        self.centers = np.asarray(self.centers, dtype=np.float64).reshape(self.n_frames, 3)
        n = self.structure.leaf_count
        self.omega_sigma = np.asarray(self.omega_sigma, dtype=np.float32).reshape(
            n, self.k_sigma
        )
        self.omega_sh = np.asarray(self.omega_sh, dtype=np.float32).reshape(
            n, SH_DIM * 3, self.k_sh
        )

    @property
    def basis_frames(self) -> int:
        """Length of the time axis the coefficient basis spans."""
        return self.n_frames + 2 if self.padded else self.n_frames

    @property
    def frame_offset(self) -> int:
        return 1 if self.padded else 0

    @property
    def leaf_count(self) -> int:
        return self.structure.leaf_count

    def check_frame(self, t: int) -> int:
        t = int(t)
        if not 0 <= t < self.n_frames:
            raise ValueError(f"time step {t} out of range [0, {self.n_frames})")
        return t

    def box_min(self, t: int) -> np.ndarray:
        return self.centers[self.check_frame(t)] - self.half_extent

    @property
    def box_size(self) -> float:
        return 2.0 * self.half_extent

    def sigma_basis_column(self, t: int) -> np.ndarray:
        """Synthesis column for density at data frame ``t``."""
        t = self.check_frame(t)
        return fourier.idft_matrix(self.k_sigma, self.basis_frames)[
            :, t + self.frame_offset
        ].copy()

    def sh_basis_column(self, t: int) -> np.ndarray:
        t = self.check_frame(t)
        return fourier.idft_matrix(self.k_sh, self.basis_frames)[
            :, t + self.frame_offset
        ].copy()

    def decode_sigma(self, leaf_ids, t: int, force_baseline: bool = False) -> np.ndarray:
        """Decoded, clipped density for the given leaves at data frame t."""
        col = self.sigma_basis_column(t)
        y = self.omega_sigma[leaf_ids].astype(np.float64) @ col
        if self.config.use_log and not force_baseline:
            y = np.expm1(y)
        return np.maximum(y, 0.0)

    def decode_sh(self, leaf_ids, t: int) -> np.ndarray:
        """SH coefficients (len(leaf_ids), SH_DIM * 3) at data frame t."""
        col = self.sh_basis_column(t)
        return self.omega_sh[leaf_ids].astype(np.float64) @ col

    def decode_frame(self, t: int, force_baseline: bool = False):
        """Decode all leaves at frame ``t`` (cached per frame/variant)."""
        key = (int(t), bool(force_baseline))
        if key not in self._frame_cache:
            ids = np.arange(self.leaf_count)
            if len(self._frame_cache) >= 8:
                self._frame_cache.clear()
            self._frame_cache[key] = (
                self.decode_sigma(ids, t, force_baseline),
                self.decode_sh(ids, t),
            )
        return self._frame_cache[key]

    def invalidate_cache(self) -> None:
        self._frame_cache.clear()


def frame_series(trees: list[FramePlenOctree], unified: OctreeStructure):
    """Gather per-leaf series from frame trees on the unified structure.

    Returns sigma (L, T) and sh (L, SH_DIM * 3, T) float64 arrays; leaves
    missing from a frame contribute zero.
    """
    n_frames = len(trees)
    leaf_count = unified.leaf_count
    sigma = np.zeros((leaf_count, n_frames))
    sh = np.zeros((leaf_count, SH_DIM * 3, n_frames))
    for t, tree in enumerate(trees):
        idx = map_leaves(tree.structure, unified)
        present = idx != EMPTY
        sigma[present, t] = tree.sigma[idx[present]]
        sh[present, :, t] = tree.sh[idx[present]]
    return sigma, sh


def assemble_fpo(
    trees: list[FramePlenOctree],
    config: EncodingConfig,
    k_sigma: int,
    k_sh: int,
    pad_endpoints: bool = True,
) -> FourierPlenOctree:
    """Unify frame trees and compress their payload series."""
    if not trees:
        raise ValueError("need at least one frame tree")
    half = trees[0].half_extent
    depth = trees[0].structure.max_depth
    for tree in trees:
        if tree.half_extent != half or tree.structure.max_depth != depth:
            raise ValueError("frame trees must share half_extent and max_depth")

    unified = unify_structures([t.structure for t in trees])
    sigma, sh = frame_series(trees, unified)
    if pad_endpoints:
        sigma = np.concatenate([sigma[:, :1], sigma, sigma[:, -1:]], axis=1)
        sh = np.concatenate([sh[:, :, :1], sh, sh[:, :, -1:]], axis=2)

    omega_sigma = encoding.encode_density_sequence(sigma, config, k_sigma)
    omega_sh = fourier.compress(sh, k_sh)
    centers = np.stack([t.center for t in trees])
    return FourierPlenOctree(
        structure=unified,
        n_frames=len(trees),
        k_sigma=k_sigma,
        k_sh=k_sh,
        config=config,
        padded=pad_endpoints,
        half_extent=half,
        centers=centers,
        omega_sigma=omega_sigma.astype(np.float32),
        omega_sh=omega_sh.astype(np.float32),
    )
