"""Posed multi-view image sets over time.

A dataset couples a static inward-facing camera rig with one rendered
image per (frame, view) pair and a deterministic train/test view split.
Generation renders the analytic scene densely with the reference
integrator; storage to and from disk lives in the file IO module.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .camera import Camera, camera_rig, rig_focal, train_test_split
from .scenes import SceneSpec, oracle_render

DEFAULT_RIG_RADIUS_FACTOR = 2.8
DEFAULT_ORACLE_STEPS = 512


@dataclass
class PosedImages:
    """Images indexed [frame, view, row, col, channel] plus their rig.

    The rig is static: every frame shares the same camera list.  Pixel
    values are float32 in [0, 1]; ``background`` records the colour the
    images were composited over.
    """

    cameras: list[Camera]
    images: np.ndarray
    train_views: list[int]
    test_views: list[int]
    background: tuple = (0.0, 0.0, 0.0)
    scene: str | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        self.images = np.asarray(self.images, dtype=np.float32)
        if self.images.ndim != 5 or self.images.shape[4] != 3:
            raise ValueError("images must have shape (frames, views, H, W, 3)")
        if self.images.shape[1] != len(self.cameras):
            raise ValueError(
                f"{len(self.cameras)} cameras for {self.images.shape[1]} image views"
            )
        for cam in self.cameras:
            if (cam.height, cam.width) != self.images.shape[2:4]:
                raise ValueError("camera resolution does not match images")
        views = sorted(self.train_views) + sorted(self.test_views)
        if sorted(views) != list(range(len(self.cameras))):
            raise ValueError("train/test views must partition the rig exactly once")
        if len(self.background) != 3:
            raise ValueError("background must be an RGB triple")
        self.background = tuple(float(c) for c in self.background)

    @property
    def n_frames(self) -> int:
        return self.images.shape[0]

    @property
    def n_views(self) -> int:
        return self.images.shape[1]

    @property
    def height(self) -> int:
        return self.images.shape[2]

    @property
    def width(self) -> int:
        return self.images.shape[3]


def generate_dataset(
    scene: SceneSpec,
    n_views: int,
    width: int,
    height: int,
    radius: float | None = None,
    fill: float = 0.85,
    step: float | None = None,
    background: tuple = (0.0, 0.0, 0.0),
    test_fraction: float = 0.2,
) -> PosedImages:
    """Render every (frame, view) pair of an inward-facing rig.

    The rig radius defaults to ``DEFAULT_RIG_RADIUS_FACTOR`` times the
    scene half extent and the integrator step to the box size divided by
    ``DEFAULT_ORACLE_STEPS``.  Deterministic for fixed arguments.
    """
    if radius is None:
        radius = DEFAULT_RIG_RADIUS_FACTOR * scene.half_extent
    if step is None:
        step = 2.0 * scene.half_extent / DEFAULT_ORACLE_STEPS
    focal = rig_focal(min(width, height), radius, scene.half_extent, fill)
    poses = camera_rig(n_views, radius, center=scene.center)
    cameras = [Camera(pose, focal, width, height) for pose in poses]
    train_views, test_views = train_test_split(n_views, test_fraction)

    images = np.empty((scene.n_frames, n_views, height, width, 3), dtype=np.float32)
    for t in range(scene.n_frames):
        for v, cam in enumerate(cameras):
            images[t, v] = oracle_render(scene, cam, t, step, background=background)
    return PosedImages(
        cameras=cameras,
        images=images,
        train_views=train_views,
        test_views=test_views,
        background=background,
        scene=scene.to_json(),
    )
