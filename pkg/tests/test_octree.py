import numpy as np
import numpy.testing as npt
import pytest

from fpoctree.encoding import EncodingConfig
from fpoctree.fourier import max_coefficients
from fpoctree.octree import (
    OCCUPANCY_THRESHOLD,
    FramePlenOctree,
    FourierPlenOctree,
    assemble_fpo,
    build_frame_octree,
    frame_series,
)
from fpoctree.structure import (
    morton_decode,
    morton_encode,
    structure_from_voxels,
    unify_structures,
)


def sphere_field(radius, sigma0, center=(0.0, 0.0, 0.0)):
    """Constant density inside a sphere; SH DC channels carry the position."""
    center = np.asarray(center)

    def sample(points):
        inside = np.linalg.norm(points - center, axis=-1) <= radius
        sigma = np.where(inside, sigma0, 0.0)
        sh = np.zeros((len(points), 9, 3))
        sh[:, 0, :] = points
        return sigma, sh

    return sample


def voxel_centers(center, half_extent, max_depth):
    res = 1 << max_depth
    cell = 2.0 * half_extent / res
    axis = np.arange(res) + 0.5
    grid = np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), axis=-1)
    return np.asarray(center) - half_extent + cell * grid.reshape(-1, 3)


class TestBuildFrameOctree:
    def test_matches_dense_center_sampling(self):
        field = sphere_field(0.6, 5.0)
        tree = build_frame_octree(field, np.zeros(3), 1.0, max_depth=4)

        pts = voxel_centers(np.zeros(3), 1.0, 4)
        sigma, _ = field(pts)
        keep = sigma > OCCUPANCY_THRESHOLD
        ijk = np.argwhere(keep.reshape(16, 16, 16))
        expected = structure_from_voxels(ijk, 4)
        assert tree.structure == expected
        npt.assert_array_equal(tree.sigma, np.full(expected.leaf_count, 5.0))

    def test_payload_aligned_with_morton_order(self):
        tree = build_frame_octree(sphere_field(0.7, 2.0), np.zeros(3), 1.0, max_depth=3)
        centers = (
            -1.0 + (tree.structure.leaf_voxels + 0.5) * (2.0 / tree.structure.resolution)
        )
        # DC SH channels were filled with the sample position.
        npt.assert_allclose(tree.sh.reshape(-1, 9, 3)[:, 0, :], centers, atol=1e-12)

    def test_threshold_is_strict(self):
        def field(points):
            sigma = np.where(points[:, 0] >= 0, 2 * OCCUPANCY_THRESHOLD, OCCUPANCY_THRESHOLD)
            return sigma, np.zeros((len(points), 9, 3))

        tree = build_frame_octree(field, np.zeros(3), 1.0, max_depth=2)
        assert tree.structure.leaf_count == 32
        assert (tree.structure.leaf_voxels[:, 0] >= 2).all()

    def test_empty_field_gives_empty_tree(self):
        def field(points):
            return np.zeros(len(points)), np.zeros((len(points), 9, 3))

        tree = build_frame_octree(field, np.zeros(3), 1.0, max_depth=2)
        assert tree.structure.leaf_count == 0

    def test_rejects_non_finite_samples(self):
        def field(points):
            sigma = np.full(len(points), np.nan)
            return sigma, np.zeros((len(points), 9, 3))

        with pytest.raises(ValueError, match="non-finite"):
            build_frame_octree(field, np.zeros(3), 1.0, max_depth=2)

    def test_rejects_bad_half_extent(self):
        with pytest.raises(ValueError, match="half_extent"):
            build_frame_octree(sphere_field(0.5, 1.0), np.zeros(3), 0.0, max_depth=2)


def random_tree(rng, max_depth=2, half_extent=1.0, center=(0.0, 0.0, 0.0), n_leaves=12):
    res = 1 << max_depth
    ijk = rng.integers(0, res, size=(n_leaves, 3))
    structure = structure_from_voxels(ijk, max_depth)
    sigma = rng.uniform(0.5, 40.0, structure.leaf_count)
    sh = rng.normal(size=(structure.leaf_count, 27))
    return FramePlenOctree(structure, np.asarray(center, dtype=np.float64), half_extent, sigma, sh)


class TestFrameSeries:
    def test_missing_leaves_contribute_zero(self):
        rng = np.random.default_rng(21)
        a = random_tree(rng)
        b = random_tree(rng)
        unified = unify_structures([a.structure, b.structure])
        sigma, sh = frame_series([a, b], unified)
        assert sigma.shape == (unified.leaf_count, 2)
        for t, tree in enumerate([a, b]):
            for slot, code in enumerate(unified.leaf_codes):
                src = np.searchsorted(tree.structure.leaf_codes, code)
                if src < tree.structure.leaf_count and tree.structure.leaf_codes[src] == code:
                    assert sigma[slot, t] == tree.sigma[src]
                    npt.assert_array_equal(sh[slot, :, t], tree.sh[src])
                else:
                    assert sigma[slot, t] == 0.0
                    assert not sh[slot, :, t].any()


class TestAssemble:
    @pytest.mark.parametrize("pad", [False, True])
    def test_full_rank_decode_recovers_frames(self, pad):
        rng = np.random.default_rng(22)
        trees = [random_tree(rng, n_leaves=10) for _ in range(5)]
        basis = 5 + 2 if pad else 5
        fpo = assemble_fpo(
            trees,
            EncodingConfig(use_log=True, use_comp=True),
            k_sigma=max_coefficients(basis),
            k_sh=max_coefficients(basis),
            pad_endpoints=pad,
        )
        assert fpo.basis_frames == basis
        ids = np.arange(fpo.leaf_count)
        sigma_ref, sh_ref = frame_series(trees, fpo.structure)
        for t in range(5):
            npt.assert_allclose(fpo.decode_sigma(ids, t), sigma_ref[:, t], atol=2e-3)
            npt.assert_allclose(fpo.decode_sh(ids, t), sh_ref[:, :, t], atol=2e-4)

    def test_absent_frames_decode_to_zero_density(self):
        rng = np.random.default_rng(23)
        a = random_tree(rng, n_leaves=6)
        b = random_tree(rng, n_leaves=6)
        fpo = assemble_fpo(
            [a, b],
            EncodingConfig(),
            k_sigma=max_coefficients(4),
            k_sh=max_coefficients(4),
        )
        only_b = [
            i
            for i, code in enumerate(fpo.structure.leaf_codes)
            if a.structure.leaf_index(morton_decode(np.array([code]), 2)[0]) == -1
        ]
        assert only_b, "expected some leaves absent from frame 0"
        npt.assert_allclose(
            fpo.decode_sigma(np.array(only_b), 0), 0.0, atol=2e-4
        )

    def test_rejects_mismatched_trees(self):
        rng = np.random.default_rng(24)
        a = random_tree(rng, max_depth=2)
        b = random_tree(rng, max_depth=3)
        with pytest.raises(ValueError, match="share"):
            assemble_fpo([a, b], EncodingConfig(), 1, 1)
        with pytest.raises(ValueError, match="at least one"):
            assemble_fpo([], EncodingConfig(), 1, 1)

    def test_moving_centers_tracked_per_frame(self):
        rng = np.random.default_rng(25)
        trees = [
            random_tree(rng, center=(0.1 * t, 0.0, 0.0), n_leaves=4) for t in range(3)
        ]
        fpo = assemble_fpo(trees, EncodingConfig(), 3, 3)
        npt.assert_allclose(fpo.centers[:, 0], [0.0, 0.1, 0.2])
        npt.assert_allclose(fpo.box_min(2), [0.2 - 1.0, -1.0, -1.0])


class TestFourierPlenOctree:
    def make(self, padded=False):
        rng = np.random.default_rng(26)
        trees = [random_tree(rng, n_leaves=8) for _ in range(4)]
        return assemble_fpo(trees, EncodingConfig(), 5, 3, pad_endpoints=padded)

    def test_frame_bounds_checked(self):
        fpo = self.make()
        with pytest.raises(ValueError, match="out of range"):
            fpo.decode_sigma(np.arange(2), 4)
        with pytest.raises(ValueError, match="out of range"):
            fpo.sigma_basis_column(-1)

    def test_padding_changes_basis_length_only(self):
        plain, padded = self.make(False), self.make(True)
        assert plain.n_frames == padded.n_frames == 4
        assert plain.basis_frames == 4
        assert padded.basis_frames == 6
        assert plain.frame_offset == 0
        assert padded.frame_offset == 1

    def test_decode_frame_caching(self):
        fpo = self.make()
        first = fpo.decode_frame(1)
        again = fpo.decode_frame(1)
        assert first[0] is again[0] and first[1] is again[1]
        fpo.invalidate_cache()
        fresh = fpo.decode_frame(1)
        assert fresh[0] is not first[0]
        npt.assert_array_equal(fresh[0], first[0])

    def test_decode_frame_matches_per_leaf_decode(self):
        fpo = self.make(True)
        sigma, sh = fpo.decode_frame(2)
        ids = np.arange(fpo.leaf_count)
        npt.assert_array_equal(sigma, fpo.decode_sigma(ids, 2))
        npt.assert_array_equal(sh, fpo.decode_sh(ids, 2))

    def test_force_baseline_skips_log_decode(self):
        fpo = self.make()
        ids = np.arange(fpo.leaf_count)
        raw = fpo.omega_sigma.astype(np.float64) @ fpo.sigma_basis_column(1)
        npt.assert_allclose(
            fpo.decode_sigma(ids, 1, force_baseline=True), np.maximum(raw, 0.0)
        )
        npt.assert_allclose(fpo.decode_sigma(ids, 1), np.maximum(np.expm1(raw), 0.0))

    def test_coefficient_budget_validated(self):
        fpo = self.make()
        with pytest.raises(ValueError):
            FourierPlenOctree(
                structure=fpo.structure,
                n_frames=4,
                k_sigma=max_coefficients(4) + 1,
                k_sh=1,
                config=EncodingConfig(),
                padded=False,
                half_extent=fpo.half_extent,
                centers=fpo.centers,
                omega_sigma=np.zeros((fpo.leaf_count, max_coefficients(4) + 1)),
                omega_sh=np.zeros((fpo.leaf_count, 27, 1)),
            )
