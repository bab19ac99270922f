"""Exact ray traversal of packed octrees.

Depth-first descent with per-cell slab intervals: children of each node
are visited in increasing entry-parameter order, so emitted leaf segments
are globally sorted, disjoint, and clipped to the ray's [near, far).
Rays running exactly inside an axis plane are assigned to the upper cell
(half-open cells) so segments stay disjoint.

Kernels are serial; callers preallocate stack and output buffers and
reuse them across rays.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .structure import OctreeStructure


def max_segments(max_depth: int) -> int:
    """Upper bound on voxels a ray can cross in a 2^d grid, plus slack."""
    return 3 * (1 << max_depth) + 2


@njit(cache=True)
def _traverse_ray(
    children,
    depth,
    bx,
    by,
    bz,
    box_size,
    ox,
    oy,
    oz,
    dx,
    dy,
    dz,
    near,
    far,
    st_row,
    st_lvl,
    st_ix,
    st_iy,
    st_iz,
    st_t0,
    st_t1,
    out_leaf,
    out_t0,
    out_t1,
):
    # Root interval against the full box.
    t0 = near
    t1 = far
    if dx != 0.0:
        inv = 1.0 / dx
        ta = (bx - ox) * inv
        tb = ta + box_size * inv
        if inv < 0.0:
            ta, tb = tb, ta
        if ta > t0:
            t0 = ta
        if tb < t1:
            t1 = tb
    elif not (bx <= ox < bx + box_size):
        return 0
    if dy != 0.0:
        inv = 1.0 / dy
        ta = (by - oy) * inv
        tb = ta + box_size * inv
        if inv < 0.0:
            ta, tb = tb, ta
        if ta > t0:
            t0 = ta
        if tb < t1:
            t1 = tb
    elif not (by <= oy < by + box_size):
        return 0
    if dz != 0.0:
        inv = 1.0 / dz
        ta = (bz - oz) * inv
        tb = ta + box_size * inv
        if inv < 0.0:
            ta, tb = tb, ta
        if ta > t0:
            t0 = ta
        if tb < t1:
            t1 = tb
    elif not (bz <= oz < bz + box_size):
        return 0
    if t1 <= t0:
        return 0

    st_row[0] = 0
    st_lvl[0] = 0
    st_ix[0] = 0
    st_iy[0] = 0
    st_iz[0] = 0
    st_t0[0] = t0
    st_t1[0] = t1
    sp = 1
    n_out = 0

    while sp > 0:
        sp -= 1
        row = st_row[sp]
        lvl = st_lvl[sp]
        ix = st_ix[sp]
        iy = st_iy[sp]
        iz = st_iz[sp]
        n_t0 = st_t0[sp]
        n_t1 = st_t1[sp]

        if lvl == depth:
            if n_out >= out_leaf.shape[0]:
                return -1
            out_leaf[n_out] = row
            out_t0[n_out] = n_t0
            out_t1[n_out] = n_t1
            n_out += 1
            continue

        cs = box_size / (1 << (lvl + 1))
        base = sp
        # Reverse child order so that a stable descending sort below keeps
        # equal-entry ties popping in ascending child index.
        for c in range(7, -1, -1):
            child = children[row, c]
            if child == -1:
                continue
            cix = 2 * ix + ((c >> 2) & 1)
            ciy = 2 * iy + ((c >> 1) & 1)
            ciz = 2 * iz + (c & 1)
            lo0 = bx + cix * cs
            lo1 = by + ciy * cs
            lo2 = bz + ciz * cs

            c_t0 = n_t0
            c_t1 = n_t1
            ok = True
            if dx != 0.0:
                inv = 1.0 / dx
                ta = (lo0 - ox) * inv
                tb = ta + cs * inv
                if inv < 0.0:
                    ta, tb = tb, ta
                if ta > c_t0:
                    c_t0 = ta
                if tb < c_t1:
                    c_t1 = tb
            elif not (lo0 <= ox < lo0 + cs):
                ok = False
            if ok and dy != 0.0:
                inv = 1.0 / dy
                ta = (lo1 - oy) * inv
                tb = ta + cs * inv
                if inv < 0.0:
                    ta, tb = tb, ta
                if ta > c_t0:
                    c_t0 = ta
                if tb < c_t1:
                    c_t1 = tb
            elif ok and not (lo1 <= oy < lo1 + cs):
                ok = False
            if ok and dz != 0.0:
                inv = 1.0 / dz
                ta = (lo2 - oz) * inv
                tb = ta + cs * inv
                if inv < 0.0:
                    ta, tb = tb, ta
                if ta > c_t0:
                    c_t0 = ta
                if tb < c_t1:
                    c_t1 = tb
            elif ok and not (lo2 <= oz < lo2 + cs):
                ok = False

            if ok and c_t1 > c_t0:
                st_row[sp] = child
                st_lvl[sp] = lvl + 1
                st_ix[sp] = cix
                st_iy[sp] = ciy
                st_iz[sp] = ciz
                st_t0[sp] = c_t0
                st_t1[sp] = c_t1
                sp += 1

        # Stable insertion sort, descending entry parameter, so the
        # nearest child sits on top of the stack.
        for i in range(base + 1, sp):
            j = i
            while j > base and st_t0[j] > st_t0[j - 1]:
                for arr in (st_t0, st_t1):
                    arr[j], arr[j - 1] = arr[j - 1], arr[j]
                for arr in (st_row, st_lvl, st_ix, st_iy, st_iz):
                    arr[j], arr[j - 1] = arr[j - 1], arr[j]
                j -= 1
    return n_out


@njit(cache=True)
def _traverse_batch(
    children,
    depth,
    bx,
    by,
    bz,
    box_size,
    origins,
    dirs,
    nears,
    fars,
    leaf_out,
    t0_out,
    t1_out,
    counts,
):
    cap = leaf_out.shape[1]
    max_stack = 8 * (depth + 1) + 8
    st_row = np.empty(max_stack, np.int64)
    st_lvl = np.empty(max_stack, np.int64)
    st_ix = np.empty(max_stack, np.int64)
    st_iy = np.empty(max_stack, np.int64)
    st_iz = np.empty(max_stack, np.int64)
    st_t0 = np.empty(max_stack, np.float64)
    st_t1 = np.empty(max_stack, np.float64)
    for i in range(origins.shape[0]):
        n = _traverse_ray(
            children,
            depth,
            bx,
            by,
            bz,
            box_size,
            origins[i, 0],
            origins[i, 1],
            origins[i, 2],
            dirs[i, 0],
            dirs[i, 1],
            dirs[i, 2],
            nears[i],
            fars[i],
            st_row,
            st_lvl,
            st_ix,
            st_iy,
            st_iz,
            st_t0,
            st_t1,
            leaf_out[i, :cap],
            t0_out[i, :cap],
            t1_out[i, :cap],
        )
        counts[i] = n


class SegmentBatch:
    """CSR-packed traversal output for a batch of rays.

    ``offsets`` has length n_rays + 1; ray i owns slots
    [offsets[i], offsets[i+1]) of ``leaf``, ``t_enter``, ``t_exit``.
    """

    __slots__ = ("offsets", "leaf", "t_enter", "t_exit")

    def __init__(self, offsets, leaf, t_enter, t_exit):
        self.offsets = offsets
        self.leaf = leaf
        self.t_enter = t_enter
        self.t_exit = t_exit

    @property
    def n_rays(self) -> int:
        return self.offsets.size - 1

    @property
    def n_segments(self) -> int:
        return self.leaf.size

    def ray_index(self) -> np.ndarray:
        """Owning ray for each segment."""
        return np.repeat(np.arange(self.n_rays), np.diff(self.offsets))

    def gather(self, ray_ids: np.ndarray) -> "SegmentBatch":
        """Sub-batch for the given rays, preserving per-ray order."""
        ray_ids = np.asarray(ray_ids, dtype=np.int64)
        starts = self.offsets[ray_ids]
        lengths = self.offsets[ray_ids + 1] - starts
        offsets = np.zeros(ray_ids.size + 1, dtype=np.int64)
        np.cumsum(lengths, out=offsets[1:])
        take = np.arange(offsets[-1], dtype=np.int64)
        take += np.repeat(starts - offsets[:-1], lengths)
        return SegmentBatch(
            offsets,
            self.leaf[take],
            self.t_enter[take],
            self.t_exit[take],
        )


def traverse_rays(
    structure: OctreeStructure,
    box_min: np.ndarray,
    box_size: float,
    origins: np.ndarray,
    dirs: np.ndarray,
    nears: np.ndarray | float,
    fars: np.ndarray | float,
    packed_children: np.ndarray | None = None,
) -> SegmentBatch:
    """Traverse many rays; returns CSR-packed, ray-ordered segments."""
    origins = np.ascontiguousarray(origins, dtype=np.float64)
    dirs = np.ascontiguousarray(dirs, dtype=np.float64)
    n = origins.shape[0]
    nears = np.broadcast_to(np.asarray(nears, dtype=np.float64), (n,))
    fars = np.broadcast_to(np.asarray(fars, dtype=np.float64), (n,))
    if packed_children is None:
        packed_children = structure.packed_children()

    cap = max_segments(structure.max_depth)
    leaf_out = np.empty((n, cap), dtype=np.int64)
    t0_out = np.empty((n, cap), dtype=np.float64)
    t1_out = np.empty((n, cap), dtype=np.float64)
    counts = np.empty(n, dtype=np.int64)
    _traverse_batch(
        packed_children,
        structure.max_depth,
        float(box_min[0]),
        float(box_min[1]),
        float(box_min[2]),
        float(box_size),
        origins,
        dirs,
        np.ascontiguousarray(nears),
        np.ascontiguousarray(fars),
        leaf_out,
        t0_out,
        t1_out,
        counts,
    )
    if np.any(counts < 0):
        raise RuntimeError("traversal output buffer overflow")
    offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    keep = counts > 0
    mask = np.arange(cap)[None, :] < counts[:, None]
    return SegmentBatch(
        offsets,
        leaf_out[mask] if np.any(keep) else np.empty(0, dtype=np.int64),
        t0_out[mask] if np.any(keep) else np.empty(0, dtype=np.float64),
        t1_out[mask] if np.any(keep) else np.empty(0, dtype=np.float64),
    )
