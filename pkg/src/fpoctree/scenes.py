"""Analytic time-varying test scenes and an independent reference renderer.

Scenes are exact closed-form fields: density with a smoothstep falloff
that reaches exactly zero outside each primitive (keeping octrees sparse
and blink-off frames truly empty), and direction-independent colour that
a degree-2 SH payload can represent exactly through its DC band.

``oracle_render`` shares no rendering code with the octree path: it
marches each ray with uniform steps through the analytic field and
accumulates emission-absorption directly, serving as ground truth.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .camera import Camera, generate_rays
from .sh import SH_C0


def smoothstep(u: np.ndarray) -> np.ndarray:
    u = np.clip(u, 0.0, 1.0)
    return u * u * (3.0 - 2.0 * u)


def logit(p):
    p = np.asarray(p, dtype=np.float64)
    return np.log(p / (1.0 - p))


@dataclass(frozen=True)
class Primitive:
    """One analytic blob: sphere or axis-aligned box with soft edges."""

    shape: str  # "sphere" | "box"
    size: tuple  # (radius,) or (hx, hy, hz)
    sigma0: float
    edge: float
    trajectory: Callable[[int], np.ndarray]
    amplitude: Callable[[int], float]
    colour: Callable[[np.ndarray, int], np.ndarray]

    def density(self, points: np.ndarray, t: int) -> np.ndarray:
        amp = self.amplitude(t)
        if amp == 0.0:
            return np.zeros(len(points))
        local = points - self.trajectory(t)
        if self.shape == "sphere":
            depth = self.size[0] - np.linalg.norm(local, axis=-1)
        else:
            depth = -np.max(np.abs(local) - np.asarray(self.size), axis=-1)
        return self.sigma0 * amp * smoothstep(depth / self.edge)

    def bounding_sphere(self, t: int) -> tuple[np.ndarray, float]:
        if self.shape == "sphere":
            r = self.size[0]
        else:
            r = float(np.linalg.norm(self.size))
        return self.trajectory(t), r


@dataclass(frozen=True)
class SceneSpec:
    name: str
    n_frames: int
    center: np.ndarray
    half_extent: float
    primitives: tuple[Primitive, ...]

    def __post_init__(self) -> None:
        if self.n_frames < 1:
            raise ValueError("n_frames must be >= 1")
        if self.half_extent <= 0:
            raise ValueError("half_extent must be positive")

    def check_frame(self, t: int) -> int:
        t = int(t)
        if not 0 <= t < self.n_frames:
            raise ValueError(f"time step {t} out of range [0, {self.n_frames})")
        return t

    def density(self, points: np.ndarray, t: int) -> np.ndarray:
        t = self.check_frame(t)
        points = np.asarray(points, dtype=np.float64)
        out = np.zeros(len(points))
        for prim in self.primitives:
            out += prim.density(points, t)
        return out

    def colour(self, points: np.ndarray, t: int) -> np.ndarray:
        """Density-weighted blend of primitive colours, in (0, 1)."""
        t = self.check_frame(t)
        points = np.asarray(points, dtype=np.float64)
        acc = np.zeros((len(points), 3))
        total = np.zeros(len(points))
        for prim in self.primitives:
            w = prim.density(points, t)
            acc += w[:, None] * prim.colour(points, t)
            total += w
        safe = np.maximum(total, 1e-300)
        blend = acc / safe[:, None]
        return np.where(total[:, None] > 0, blend, 0.5)

    def sh_coeffs(self, points: np.ndarray, t: int) -> np.ndarray:
        """DC-band SH payload whose sigmoid decode reproduces colour()."""
        sh = np.zeros((len(points), 9, 3))
        sh[:, 0, :] = logit(self.colour(points, t)) / SH_C0
        return sh

    def sample_fn(self, t: int):
        """Field oracle at frame t, in build_frame_octree's contract."""
        t = self.check_frame(t)

        def sample(points):
            return self.density(points, t), self.sh_coeffs(points, t)

        return sample

    def clip_interval(self, origins, dirs, t: int, near: float, far: float):
        """Per-ray parametric interval covering every primitive's support.

        Conservative union of bounding-sphere intersections; rays touching
        nothing get an empty interval.
        """
        t0 = np.full(len(origins), np.inf)
        t1 = np.full(len(origins), -np.inf)
        margin = max(p.edge for p in self.primitives) if self.primitives else 0.0
        for prim in self.primitives:
            if prim.amplitude(t) == 0.0:
                continue
            center, radius = prim.bounding_sphere(t)
            oc = origins - center
            b = np.einsum("ij,ij->i", oc, dirs)
            disc = b * b - (np.einsum("ij,ij->i", oc, oc) - (radius + margin) ** 2)
            hit = disc > 0
            root = np.sqrt(np.maximum(disc, 0.0))
            t0 = np.where(hit, np.minimum(t0, -b - root), t0)
            t1 = np.where(hit, np.maximum(t1, -b + root), t1)
        miss = ~np.isfinite(t0)
        t0 = np.where(miss, near, np.maximum(t0, near))
        t1 = np.where(miss, near, np.minimum(t1, far))
        return t0, t1

    def to_json(self) -> str:
        return json.dumps(
            {
                "scene": self.name,
                "n_frames": self.n_frames,
                "center": list(self.center),
                "half_extent": self.half_extent,
            },
            sort_keys=True,
        )


def scene_from_json(text: str) -> SceneSpec:
    data = json.loads(text)
    scene = make_scene(data["scene"], data["n_frames"])
    if list(scene.center) != data["center"] or scene.half_extent != data["half_extent"]:
        raise ValueError("scene descriptor bounds do not match the named scene")
    return scene


def _pulse(n_frames: int) -> SceneSpec:
    # Density blinks in blocks of two frames: exactly zero when off.
    def amplitude(t):
        return 1.0 if (t // 2) % 2 == 0 else 0.0

    prim = Primitive(
        shape="sphere",
        size=(0.55,),
        sigma0=40.0,
        edge=0.12,
        trajectory=lambda t: np.zeros(3),
        amplitude=amplitude,
        colour=lambda pts, t: np.broadcast_to(
            np.array([0.85, 0.35, 0.3]), (len(pts), 3)
        ).copy(),
    )
    return SceneSpec("pulse", n_frames, np.zeros(3), 1.5, (prim,))


def _orbit(n_frames: int) -> SceneSpec:
    rho = 0.75

    def trajectory(t):
        angle = 2.0 * math.pi * t / n_frames
        return np.array([rho * math.cos(angle), rho * math.sin(angle), 0.0])

    def colour(pts, t):
        # Positional gradient so motion is visible from every view.
        out = 0.5 + 0.3 * pts / 1.5
        return np.clip(out, 0.05, 0.95)

    prim = Primitive(
        shape="sphere",
        size=(0.55,),
        sigma0=60.0,
        edge=0.12,
        trajectory=trajectory,
        amplitude=lambda t: 1.0,
        colour=colour,
    )
    return SceneSpec("orbit", n_frames, np.zeros(3), 1.5, (prim,))


def _fade(n_frames: int) -> SceneSpec:
    c_start = np.array([0.2, 0.4, 0.85])
    c_end = np.array([0.9, 0.6, 0.15])

    def colour(pts, t):
        u = t / max(n_frames - 1, 1)
        c = (1 - u) * c_start + u * c_end
        return np.broadcast_to(c, (len(pts), 3)).copy()

    prim = Primitive(
        shape="box",
        size=(0.7, 0.5, 0.4),
        sigma0=3.0,
        edge=0.1,
        trajectory=lambda t: np.zeros(3),
        amplitude=lambda t: 1.0 + 0.5 * math.sin(2.0 * math.pi * t / n_frames),
        colour=colour,
    )
    return SceneSpec("fade", n_frames, np.zeros(3), 1.5, (prim,))


_SCENES = {"pulse": _pulse, "orbit": _orbit, "fade": _fade}


def scene_names() -> list[str]:
    return sorted(_SCENES)


def make_scene(name: str, n_frames: int) -> SceneSpec:
    if name not in _SCENES:
        raise ValueError(f"unknown scene {name!r}; available: {', '.join(scene_names())}")
    return _SCENES[name](n_frames)


def standard_scenes(n_frames: int = 20) -> list[SceneSpec]:
    return [make_scene(name, n_frames) for name in scene_names()]


def oracle_render(
    scene: SceneSpec,
    camera: Camera,
    t: int,
    step: float,
    background=(0.0, 0.0, 0.0),
    near: float = 1e-3,
    far: float = 1e6,
    chunk: int = 4096,
) -> np.ndarray:
    """Fixed-step reference rendering of the analytic field.

    Uniform midpoint sampling with per-segment opacity 1 - exp(-sigma *
    delta), front-to-back compositing, background under the remaining
    transmittance.  Independent of the octree renderer by construction.
    """
    t = scene.check_frame(t)
    if step <= 0:
        raise ValueError("step must be positive")
    origins, dirs = generate_rays(camera)
    bg = np.asarray(background, dtype=np.float64)
    out = np.empty((len(origins), 3))

    for lo in range(0, len(origins), chunk):
        o = origins[lo : lo + chunk]
        d = dirs[lo : lo + chunk]
        t0, t1 = scene.clip_interval(o, d, t, near, far)
        span = np.maximum(t1 - t0, 0.0)
        n_steps = int(np.ceil(span.max() / step)) if span.max() > 0 else 0
        if n_steps == 0:
            out[lo : lo + chunk] = bg
            continue
        # Per-ray uniform delta <= step over its own interval.
        counts = np.maximum(np.ceil(span / step), 1.0)
        delta = span / counts
        taus = t0[:, None] + (np.arange(n_steps) + 0.5)[None, :] * delta[:, None]
        live = (np.arange(n_steps)[None, :] < counts[:, None]) & (span[:, None] > 0)
        pts = o[:, None, :] + taus[..., None] * d[:, None, :]
        flat = pts.reshape(-1, 3)
        sigma = scene.density(flat, t).reshape(taus.shape)
        sigma = np.where(live, sigma, 0.0)
        alpha = 1.0 - np.exp(-sigma * delta[:, None])
        trans = np.cumprod(1.0 - alpha, axis=1)
        trans = np.concatenate([np.ones((len(o), 1)), trans[:, :-1]], axis=1)
        weights = trans * alpha
        rgb = scene.colour(flat, t).reshape(taus.shape + (3,))
        acc = np.einsum("rs,rsc->rc", weights, rgb)
        # Padded samples carry sigma 0, so alpha 0: the full product is the
        # remaining transmittance regardless of per-ray step counts.
        remaining = np.prod(1.0 - alpha, axis=1)
        out[lo : lo + chunk] = acc + remaining[:, None] * bg

    return np.clip(out.reshape(camera.height, camera.width, 3), 0.0, 1.0)
