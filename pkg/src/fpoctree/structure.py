"""Sparse octree topology shared by per-frame trees and assembled trees.

All leaves live at the maximum depth; internal nodes exist only where a
descendant leaf does.  Leaves are ordered by Morton code, which makes
structural union a sorted-array merge and keeps every node's descendants
contiguous.  For traversal kernels the per-level child tables are packed
into one flat array whose entries point at rows of the next level, or at
leaf payload indices on the last level.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MAX_DEPTH = 10
EMPTY = -1


def morton_encode(ijk: np.ndarray, depth: int) -> np.ndarray:
    """Interleave voxel coordinates (N, 3) into Morton codes.

    Axis 0 occupies the highest bit of each 3-bit digit, so sorting codes
    sorts lexicographically by interleaved (i, j, k) bits.
    """
    ijk = np.asarray(ijk, dtype=np.int64)
    if np.any(ijk < 0) or np.any(ijk >= (1 << depth)):
        raise ValueError("voxel coordinates out of range for depth")
    codes = np.zeros(ijk.shape[:-1], dtype=np.int64)
    for b in range(depth):
        codes |= ((ijk[..., 0] >> b) & 1) << (3 * b + 2)
        codes |= ((ijk[..., 1] >> b) & 1) << (3 * b + 1)
        codes |= ((ijk[..., 2] >> b) & 1) << (3 * b)
    return codes


def morton_decode(codes: np.ndarray, depth: int) -> np.ndarray:
    codes = np.asarray(codes, dtype=np.int64)
    out = np.zeros(codes.shape + (3,), dtype=np.int64)
    for b in range(depth):
        out[..., 0] |= ((codes >> (3 * b + 2)) & 1) << b
        out[..., 1] |= ((codes >> (3 * b + 1)) & 1) << b
        out[..., 2] |= ((codes >> (3 * b)) & 1) << b
    return out


@dataclass(frozen=True)
class OctreeStructure:
    """Topology only: which voxels at ``max_depth`` hold a leaf.

    ``levels[l]`` is an (n_l, 8) int32 child table for nodes at depth l;
    the root is ``levels[0][0]``.  Entries index rows of ``levels[l+1]``,
    except on the last level where they index leaf payload slots.  Leaf
    slot order equals Morton order of ``leaf_codes``.
    """

    max_depth: int
    levels: tuple[np.ndarray, ...]
    leaf_codes: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        if not 1 <= self.max_depth <= MAX_DEPTH:
            raise ValueError(f"max_depth must be in [1, {MAX_DEPTH}], got {self.max_depth}")
        if len(self.levels) != self.max_depth:
            raise ValueError("levels must contain one child table per depth")

    @property
    def resolution(self) -> int:
        return 1 << self.max_depth

    @property
    def leaf_count(self) -> int:
        return int(self.leaf_codes.size)

    @property
    def leaf_voxels(self) -> np.ndarray:
        """Voxel coordinates (leaf_count, 3) in leaf slot order."""
        return morton_decode(self.leaf_codes, self.max_depth)

    def leaf_index(self, ijk) -> int:
        """Leaf slot for a voxel coordinate, or -1 when unstored."""
        code = morton_encode(np.asarray(ijk)[None, :], self.max_depth)[0]
        pos = int(np.searchsorted(self.leaf_codes, code))
        if pos < self.leaf_codes.size and self.leaf_codes[pos] == code:
            return pos
        return EMPTY

    def packed_children(self) -> np.ndarray:
        """All levels concatenated with absolute child rows, for kernels.

        Row 0 is the root.  On non-terminal levels child entries are
        rewritten to absolute rows in the packed array; terminal entries
        stay as leaf payload indices.
        """
        offsets = np.cumsum([0] + [lvl.shape[0] for lvl in self.levels])
        packed = np.concatenate(self.levels, axis=0).astype(np.int32, copy=True)
        for l in range(self.max_depth - 1):
            view = packed[offsets[l] : offsets[l + 1]]
            stored = view != EMPTY
            view[stored] += np.int32(offsets[l + 1])
        return packed

    def __eq__(self, other) -> bool:
        if not isinstance(other, OctreeStructure):
            return NotImplemented
        return (
            self.max_depth == other.max_depth
            and np.array_equal(self.leaf_codes, other.leaf_codes)
        )


def structure_from_codes(codes: np.ndarray, max_depth: int) -> OctreeStructure:
    """Build the level tables for a sorted, unique set of Morton codes."""
    codes = np.asarray(codes, dtype=np.int64)
    if codes.size == 0:
        levels = tuple(
            np.full((1 if l == 0 else 0, 8), EMPTY, dtype=np.int32)
            for l in range(max_depth)
        )
        return OctreeStructure(max_depth, levels, codes)
    codes = np.unique(codes)
    if codes[0] < 0 or codes[-1] >= 1 << (3 * max_depth):
        raise ValueError("Morton codes out of range for depth")

    levels = []
    parent_codes = np.zeros(1, dtype=np.int64)
    for l in range(max_depth):
        shift = 3 * (max_depth - l - 1)
        child_codes = np.unique(codes >> shift)
        table = np.full((parent_codes.size, 8), EMPTY, dtype=np.int32)
        rows = np.searchsorted(parent_codes, child_codes >> 3)
        table[rows, child_codes & 7] = np.arange(child_codes.size, dtype=np.int32)
        levels.append(table)
        parent_codes = child_codes
    return OctreeStructure(max_depth, tuple(levels), codes)


def structure_from_voxels(ijk: np.ndarray, max_depth: int) -> OctreeStructure:
    return structure_from_codes(morton_encode(ijk, max_depth), max_depth)


def unify_structures(structures) -> OctreeStructure:
    """Union of stored voxels across structures of equal depth."""
    structures = list(structures)
    if not structures:
        raise ValueError("need at least one structure to unify")
    depth = structures[0].max_depth
    if any(s.max_depth != depth for s in structures):
        raise ValueError("structures must share max_depth")
    codes = np.unique(np.concatenate([s.leaf_codes for s in structures]))
    return structure_from_codes(codes, depth)


def map_leaves(source: OctreeStructure, target: OctreeStructure) -> np.ndarray:
    """For each target leaf, the matching source leaf slot or -1."""
    pos = np.searchsorted(source.leaf_codes, target.leaf_codes)
    pos = np.minimum(pos, max(source.leaf_count - 1, 0))
    if source.leaf_count == 0:
        return np.full(target.leaf_count, EMPTY, dtype=np.int64)
    hit = source.leaf_codes[pos] == target.leaf_codes
    return np.where(hit, pos, EMPTY)
