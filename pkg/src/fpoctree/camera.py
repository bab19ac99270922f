"""Pinhole cameras, ray generation, and inward-facing view rigs.

Convention: camera x points right, y points down, z along the optical
axis; pixel (0, 0) is top-left and rays pass through pixel centers at
half-integer coordinates.  Poses are rigid world-from-camera transforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray
    near: float = 1e-3
    far: float = 1e3

    def __post_init__(self) -> None:
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=np.float64))
        object.__setattr__(self, "direction", np.asarray(self.direction, dtype=np.float64))
        if not (0.0 < self.near < self.far):
            raise ValueError(f"need 0 < near < far, got near={self.near} far={self.far}")
        norm = float(np.linalg.norm(self.direction))
        if not math.isclose(norm, 1.0, abs_tol=1e-6):
            raise ValueError(f"direction must be unit length, |d|={norm}")

    def point_at(self, t: float) -> np.ndarray:
        return self.origin + t * self.direction


@dataclass(frozen=True)
class Camera:
    """Pinhole intrinsics plus a rigid pose."""

    world_from_camera: np.ndarray
    focal: float
    width: int
    height: int
    cx: float | None = None
    cy: float | None = None

    def __post_init__(self) -> None:
        pose = np.asarray(self.world_from_camera, dtype=np.float64).reshape(4, 4)
        object.__setattr__(self, "world_from_camera", pose)
        if self.focal <= 0:
            raise ValueError(f"focal must be positive, got {self.focal}")
        if self.width < 1 or self.height < 1:
            raise ValueError("image dimensions must be positive")
        if self.cx is None:
            object.__setattr__(self, "cx", self.width / 2.0)
        if self.cy is None:
            object.__setattr__(self, "cy", self.height / 2.0)
        if not (0.0 <= self.cx <= self.width and 0.0 <= self.cy <= self.height):
            raise ValueError("principal point must lie inside the image")
        rot = pose[:3, :3]
        if not np.allclose(rot @ rot.T, np.eye(3), atol=1e-6) or np.linalg.det(rot) < 0:
            raise ValueError("world_from_camera must be a rigid transform")
        if not np.allclose(pose[3], [0.0, 0.0, 0.0, 1.0], atol=1e-9):
            raise ValueError("world_from_camera last row must be [0, 0, 0, 1]")

    @property
    def position(self) -> np.ndarray:
        return self.world_from_camera[:3, 3]

    @property
    def rotation(self) -> np.ndarray:
        return self.world_from_camera[:3, :3]


def generate_ray(
    camera: Camera, px: int, py: int, near: float = 1e-3, far: float = 1e3
) -> Ray:
    """Ray through the center of pixel (px, py)."""
    if not (0 <= px < camera.width and 0 <= py < camera.height):
        raise ValueError(f"pixel ({px}, {py}) outside image")
    d_cam = np.array(
        [
            (px + 0.5 - camera.cx) / camera.focal,
            (py + 0.5 - camera.cy) / camera.focal,
            1.0,
        ]
    )
    d_world = camera.rotation @ d_cam
    d_world /= np.linalg.norm(d_world)
    return Ray(camera.position.copy(), d_world, near, far)


def generate_rays(camera: Camera) -> tuple[np.ndarray, np.ndarray]:
    """All pixel-center rays; origins and unit directions, shape (H*W, 3).

    Row-major pixel order: index = py * width + px.
    """
    px = (np.arange(camera.width) + 0.5 - camera.cx) / camera.focal
    py = (np.arange(camera.height) + 0.5 - camera.cy) / camera.focal
    gx, gy = np.meshgrid(px, py)
    d_cam = np.stack([gx, gy, np.ones_like(gx)], axis=-1).reshape(-1, 3)
    d_world = d_cam @ camera.rotation.T
    d_world /= np.linalg.norm(d_world, axis=-1, keepdims=True)
    origins = np.broadcast_to(camera.position, d_world.shape).copy()
    return origins, d_world


def project(camera: Camera, point: np.ndarray) -> np.ndarray:
    """World point to continuous pixel coordinates (half-integers are
    pixel centers).  Points behind the camera are rejected."""
    pose = camera.world_from_camera
    p_cam = pose[:3, :3].T @ (np.asarray(point, dtype=np.float64) - pose[:3, 3])
    if p_cam[2] <= 0:
        raise ValueError("point is behind the camera")
    return np.array(
        [
            camera.focal * p_cam[0] / p_cam[2] + camera.cx,
            camera.focal * p_cam[1] / p_cam[2] + camera.cy,
        ]
    )


def look_at(eye: np.ndarray, target: np.ndarray, up=(0.0, 0.0, 1.0)) -> np.ndarray:
    """World-from-camera matrix for a camera at ``eye`` facing ``target``."""
    eye = np.asarray(eye, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - eye
    norm = np.linalg.norm(forward)
    if norm == 0:
        raise ValueError("eye and target coincide")
    forward /= norm
    right = np.cross(forward, np.asarray(up, dtype=np.float64))
    norm = np.linalg.norm(right)
    if norm < 1e-9:
        raise ValueError("view direction parallel to up vector")
    right /= norm
    down = np.cross(forward, right)
    pose = np.eye(4)
    pose[:3, 0] = right
    pose[:3, 1] = down
    pose[:3, 2] = forward
    pose[:3, 3] = eye
    return pose


def camera_rig(
    n_views: int,
    radius: float,
    center=(0.0, 0.0, 0.0),
    min_elevation_deg: float = 8.0,
    max_elevation_deg: float = 75.0,
) -> list[np.ndarray]:
    """Inward-facing poses on an upper spherical cap, golden-angle spaced.

    Deterministic: the same arguments always produce the same rig.
    """
    if n_views < 1:
        raise ValueError("n_views must be >= 1")
    if radius <= 0:
        raise ValueError("radius must be positive")
    center = np.asarray(center, dtype=np.float64)
    golden = math.pi * (3.0 - math.sqrt(5.0))
    poses = []
    for i in range(n_views):
        frac = (i + 0.5) / n_views
        elev = math.radians(
            min_elevation_deg + frac * (max_elevation_deg - min_elevation_deg)
        )
        azim = i * golden
        eye = center + radius * np.array(
            [
                math.cos(elev) * math.cos(azim),
                math.cos(elev) * math.sin(azim),
                math.sin(elev),
            ]
        )
        poses.append(look_at(eye, center))
    return poses


def train_test_split(n_views: int, test_fraction: float = 0.2) -> tuple[list[int], list[int]]:
    """Deterministic hold-out: every round(1/fraction)-th view is test."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must be in (0, 1)")
    stride = max(int(round(1.0 / test_fraction)), 2)
    test = [i for i in range(n_views) if i % stride == stride - 1]
    train = [i for i in range(n_views) if i % stride != stride - 1]
    return train, test


def rig_focal(width: int, radius: float, half_extent: float, fill: float = 0.85) -> float:
    """Focal length so the scene's bounding sphere spans ``fill`` of the image."""
    bound = math.sqrt(3.0) * half_extent
    if radius <= bound:
        raise ValueError("camera radius must exceed the scene bounding sphere")
    return fill * (width / 2.0) * math.sqrt(radius**2 - bound**2) / bound
