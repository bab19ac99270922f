import math

import numpy as np
import numpy.testing as npt
import pytest

from fpoctree.camera import Camera, look_at, rig_focal
from fpoctree.scenes import (
    Primitive,
    SceneSpec,
    make_scene,
    oracle_render,
    scene_from_json,
    scene_names,
    smoothstep,
    standard_scenes,
)
from fpoctree.sh import SH_C0


def face_on_camera(width=24, height=24, distance=4.0):
    pose = look_at(np.array([distance, 0.0, 0.0]), np.zeros(3), up=(0.0, 0.0, 1.0))
    return Camera(pose, rig_focal(width, distance, 1.5), width, height)


def random_points(rng, n=200, scale=1.5):
    return rng.uniform(-scale, scale, size=(n, 3))


class TestFields:
    def test_pulse_blink_off_frames_are_empty(self):
        scene = make_scene("pulse", 8)
        rng = np.random.default_rng(40)
        pts = random_points(rng)
        for t in (2, 3, 6, 7):
            npt.assert_array_equal(scene.density(pts, t), 0.0)
        for t in (0, 1, 4, 5):
            assert scene.density(np.zeros((1, 3)), t)[0] == 40.0

    def test_orbit_center_follows_circle(self):
        n = 12
        scene = make_scene("orbit", n)
        for t in range(n):
            angle = 2 * math.pi * t / n
            center = np.array([0.75 * math.cos(angle), 0.75 * math.sin(angle), 0.0])
            assert scene.density(center[None, :], t)[0] == 60.0
            far_side = -center
            assert scene.density(far_side[None, :], t)[0] == 0.0

    def test_density_nonnegative_and_colours_in_range(self):
        rng = np.random.default_rng(41)
        pts = random_points(rng, 500)
        for scene in standard_scenes(6):
            for t in range(6):
                assert (scene.density(pts, t) >= 0).all()
                colours = scene.colour(pts, t)
                assert (colours > 0).all() and (colours < 1).all()

    def test_grid_integral_finite_every_frame(self):
        axis = np.linspace(-1.5, 1.5, 24)
        grid = np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), -1).reshape(-1, 3)
        cell = (3.0 / 24) ** 3
        for scene in standard_scenes(5):
            for t in range(5):
                total = scene.density(grid, t).sum() * cell
                assert np.isfinite(total) and total >= 0

    def test_sh_payload_reproduces_colour_through_sigmoid(self):
        scene = make_scene("orbit", 4)
        rng = np.random.default_rng(42)
        pts = random_points(rng, 100)
        sh = scene.sh_coeffs(pts, 1)
        decoded = 1.0 / (1.0 + np.exp(-sh[:, 0, :] * SH_C0))
        npt.assert_allclose(decoded, scene.colour(pts, 1), atol=1e-12)
        assert not sh[:, 1:, :].any()

    def test_smoothstep_endpoints_and_monotonicity(self):
        assert smoothstep(np.array(-0.5)) == 0.0
        assert smoothstep(np.array(1.5)) == 1.0
        u = np.linspace(0, 1, 100)
        assert (np.diff(smoothstep(u)) >= 0).all()

    def test_frame_and_name_validation(self):
        scene = make_scene("fade", 3)
        with pytest.raises(ValueError, match="out of range"):
            scene.density(np.zeros((1, 3)), 3)
        with pytest.raises(ValueError, match="unknown scene"):
            make_scene("nonexistent", 3)
        assert scene_names() == ["fade", "orbit", "pulse"]


class TestSerialization:
    def test_json_roundtrip(self):
        scene = make_scene("orbit", 10)
        again = scene_from_json(scene.to_json())
        assert again.name == scene.name
        assert again.n_frames == scene.n_frames
        rng = np.random.default_rng(43)
        pts = random_points(rng, 50)
        for t in (0, 5, 9):
            npt.assert_array_equal(again.density(pts, t), scene.density(pts, t))

    def test_tampered_descriptor_rejected(self):
        text = make_scene("pulse", 4).to_json().replace("1.5", "2.5")
        with pytest.raises(ValueError, match="bounds"):
            scene_from_json(text)


def slab_scene(sigma0=1.0, edge=0.1):
    """Homogeneous box slab; a face-on ray sees optical depth
    sigma0 * (thickness - edge): each smoothstep ramp integrates to
    exactly half the edge width."""
    prim = Primitive(
        shape="box",
        size=(0.65, 1.0, 1.0),
        sigma0=sigma0,
        edge=edge,
        trajectory=lambda t: np.zeros(3),
        amplitude=lambda t: 1.0,
        colour=lambda pts, t: np.full((len(pts), 3), 0.5),
    )
    return SceneSpec("slab", 1, np.zeros(3), 1.5, (prim,))


class TestOracleRender:
    def test_empty_scene_gives_background(self):
        scene = make_scene("pulse", 8)
        img = oracle_render(scene, face_on_camera(), 2, step=0.01, background=(0.2, 0.4, 0.6))
        npt.assert_array_equal(img, np.broadcast_to([0.2, 0.4, 0.6], img.shape))

    def test_slab_transmission_matches_beer_lambert(self):
        sigma0, edge, thickness = 1.0, 0.1, 1.3
        scene = slab_scene(sigma0, edge)
        cam = face_on_camera(width=17, height=17)
        dark = oracle_render(scene, cam, 0, step=0.002, background=(0.0, 0.0, 0.0))
        lit = oracle_render(scene, cam, 0, step=0.002, background=(1.0, 1.0, 1.0))
        transmitted = lit[8, 8, 0] - dark[8, 8, 0]
        expected = math.exp(-sigma0 * (thickness - edge))
        npt.assert_allclose(transmitted, expected, atol=1e-4)

    def test_halving_step_is_converged(self):
        scene = make_scene("orbit", 6)
        cam = face_on_camera(width=20, height=20)
        coarse = oracle_render(scene, cam, 3, step=0.01)
        fine = oracle_render(scene, cam, 3, step=0.005)
        assert np.abs(coarse - fine).max() < 1e-3

    def test_step_validation(self):
        with pytest.raises(ValueError, match="step"):
            oracle_render(make_scene("fade", 2), face_on_camera(), 0, step=0.0)

    def test_background_under_partial_cover(self):
        # Fade box is semi-transparent: background must leak through.
        scene = make_scene("fade", 4)
        cam = face_on_camera(width=16, height=16)
        dark = oracle_render(scene, cam, 0, step=0.01, background=(0.0, 0.0, 0.0))
        lit = oracle_render(scene, cam, 0, step=0.01, background=(1.0, 1.0, 1.0))
        assert (lit[8, 8] > dark[8, 8] + 0.01).all()


class TestOracleRendererAgreement:
    def test_static_fade_full_rank_matches_oracle(self):
        from fpoctree.encoding import EncodingConfig
        from fpoctree.metrics import psnr
        from fpoctree.octree import assemble_fpo, build_frame_octree
        from fpoctree.render import RenderParams, render_image

        scene = make_scene("fade", 1)
        tree = build_frame_octree(scene.sample_fn(0), scene.center, scene.half_extent, 6)
        fpo = assemble_fpo(
            [tree], EncodingConfig(), k_sigma=1, k_sh=1, pad_endpoints=False
        )
        cam = face_on_camera(width=96, height=96, distance=4.5)
        voxel = 2 * scene.half_extent / tree.structure.resolution
        reference = oracle_render(scene, cam, 0, step=voxel / 8)
        rendered, _ = render_image(fpo, cam, 0, RenderParams(transmittance_cutoff=0.0))
        # Discretization-limited: voxelized field vs continuous field.
        assert psnr(rendered, reference) >= 35.0
