"""Binary octree container plus dataset, pose, and report files.

The .fpo container stores one Fourier tree: a fixed little-endian
header, the sorted leaf Morton codes (the minimal node table, from
which child tables rebuild deterministically), and one float32
coefficient blob.  Per-frame snapshot trees reuse the container with a
single frame and single coefficient, which makes the frame payload the
raw leaf values.  Saving then loading is bit-identical.

Datasets live in a directory: ``poses.json`` (shared pinhole rig),
``dataset.json`` (train/test view split and background colour),
optional ``scene.json``, and 8-bit RGB frames under ``images/``.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .camera import Camera
from .dataset import PosedImages
from .encoding import EncodingConfig
from .octree import FourierPlenOctree, FramePlenOctree
from .sh import SH_DIM
from .structure import MAX_DEPTH, structure_from_codes

MAGIC = b"FPO1"
VERSION = 1
FLAG_LOG = 1
FLAG_COMP = 2
FLAG_PADDED = 4
_KNOWN_FLAGS = FLAG_LOG | FLAG_COMP | FLAG_PADDED
_HEADER = struct.Struct("<4s7Id")


class FpoFormatError(ValueError):
    """Malformed .fpo container; ``offset`` is the failing byte."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte {offset})")
        self.offset = offset


def encoding_flags(fpo: FourierPlenOctree) -> int:
    flags = 0
    if fpo.config.use_log:
        flags |= FLAG_LOG
    if fpo.config.use_comp:
        flags |= FLAG_COMP
    if fpo.padded:
        flags |= FLAG_PADDED
    return flags


def expected_file_size(n_frames: int, leaf_count: int, k_sigma: int, k_sh: int) -> int:
    """Exact byte length of a container with the given shape."""
    header = _HEADER.size + 24 * n_frames
    nodes = 4 + 4 * leaf_count
    payload = 4 * leaf_count * (k_sigma + k_sh * SH_DIM * 3)
    return header + nodes + payload


def fpo_to_bytes(fpo: FourierPlenOctree) -> bytes:
    parts = [
        _HEADER.pack(
            MAGIC,
            VERSION,
            fpo.n_frames,
            fpo.k_sigma,
            fpo.k_sh,
            SH_DIM,
            fpo.structure.max_depth,
            encoding_flags(fpo),
            fpo.half_extent,
        ),
        np.ascontiguousarray(fpo.centers, dtype="<f8").tobytes(),
        struct.pack("<I", fpo.leaf_count),
        fpo.structure.leaf_codes.astype("<u4").tobytes(),
        np.ascontiguousarray(fpo.omega_sigma, dtype="<f4").tobytes(),
        np.ascontiguousarray(fpo.omega_sh, dtype="<f4").tobytes(),
    ]
    return b"".join(parts)


def save_fpo(fpo: FourierPlenOctree, path) -> None:
    Path(path).write_bytes(fpo_to_bytes(fpo))


def _read(data: bytes, offset: int, size: int, what: str) -> bytes:
    if offset + size > len(data):
        raise FpoFormatError(f"truncated file while reading {what}", offset)
    return data[offset : offset + size]


def fpo_from_bytes(data: bytes) -> FourierPlenOctree:
    header = _read(data, 0, _HEADER.size, "header")
    magic, version, n_frames, k_sigma, k_sh, z_dim, max_depth, flags, half_extent = (
        _HEADER.unpack(header)
    )
    if magic != MAGIC:
        raise FpoFormatError(f"bad magic {magic!r}, expected {MAGIC!r}", 0)
    if version != VERSION:
        raise FpoFormatError(f"unsupported version {version}", 4)
    if n_frames < 1:
        raise FpoFormatError("frame count must be >= 1", 8)
    basis_frames = n_frames + 2 if flags & FLAG_PADDED else n_frames
    k_limit = 2 * basis_frames - 1
    if not 1 <= k_sigma <= k_limit:
        raise FpoFormatError(f"k_sigma={k_sigma} outside [1, {k_limit}]", 12)
    if not 1 <= k_sh <= k_limit:
        raise FpoFormatError(f"k_sh={k_sh} outside [1, {k_limit}]", 16)
    if z_dim != SH_DIM:
        raise FpoFormatError(f"expected {SH_DIM} harmonics, got {z_dim}", 20)
    if not 1 <= max_depth <= MAX_DEPTH:
        raise FpoFormatError(f"max_depth={max_depth} outside [1, {MAX_DEPTH}]", 24)
    if flags & ~_KNOWN_FLAGS:
        raise FpoFormatError(f"unknown encoding flags 0x{flags:x}", 28)
    if not (np.isfinite(half_extent) and half_extent > 0):
        raise FpoFormatError("half_extent must be positive and finite", 32)

    offset = _HEADER.size
    centers = np.frombuffer(
        _read(data, offset, 24 * n_frames, "frame centers"), dtype="<f8"
    ).reshape(n_frames, 3)
    if not np.all(np.isfinite(centers)):
        raise FpoFormatError("non-finite frame center", offset)
    offset += 24 * n_frames

    (leaf_count,) = struct.unpack("<I", _read(data, offset, 4, "leaf count"))
    offset += 4
    codes = np.frombuffer(
        _read(data, offset, 4 * leaf_count, "node table"), dtype="<u4"
    ).astype(np.int64)
    if codes.size and (np.any(np.diff(codes) <= 0) or codes[-1] >= 1 << (3 * max_depth)):
        raise FpoFormatError("leaf codes must be sorted, unique, and in range", offset)
    offset += 4 * leaf_count

    n_sigma = leaf_count * k_sigma
    n_sh = leaf_count * SH_DIM * 3 * k_sh
    payload_bytes = 4 * (n_sigma + n_sh)
    if len(data) != offset + payload_bytes:
        raise FpoFormatError(
            f"payload must be exactly {payload_bytes} bytes, file has "
            f"{len(data) - offset}",
            offset,
        )
    payload = np.frombuffer(data, dtype="<f4", count=n_sigma + n_sh, offset=offset)

    return FourierPlenOctree(
        structure=structure_from_codes(codes, max_depth),
        n_frames=n_frames,
        k_sigma=k_sigma,
        k_sh=k_sh,
        config=EncodingConfig(
            use_log=bool(flags & FLAG_LOG), use_comp=bool(flags & FLAG_COMP)
        ),
        padded=bool(flags & FLAG_PADDED),
        half_extent=half_extent,
        centers=centers.copy(),
        omega_sigma=payload[:n_sigma].reshape(leaf_count, k_sigma).copy(),
        omega_sh=payload[n_sigma:].reshape(leaf_count, SH_DIM * 3, k_sh).copy(),
    )


def load_fpo(path) -> FourierPlenOctree:
    return fpo_from_bytes(Path(path).read_bytes())


def save_frame_tree(tree: FramePlenOctree, path) -> None:
    """Store a snapshot tree as a one-frame, one-coefficient container."""
    save_fpo(
        FourierPlenOctree(
            structure=tree.structure,
            n_frames=1,
            k_sigma=1,
            k_sh=1,
            config=EncodingConfig(use_log=False, use_comp=False),
            padded=False,
            half_extent=tree.half_extent,
            centers=tree.center[None, :],
            omega_sigma=tree.sigma[:, None],
            omega_sh=tree.sh[:, :, None],
        ),
        path,
    )


def load_frame_tree(path) -> FramePlenOctree:
    fpo = load_fpo(path)
    if fpo.n_frames != 1 or fpo.k_sigma != 1 or fpo.k_sh != 1 or encoding_flags(fpo):
        raise ValueError(f"{path} is not a single-frame snapshot container")
    return FramePlenOctree(
        structure=fpo.structure,
        center=fpo.centers[0],
        half_extent=fpo.half_extent,
        sigma=fpo.omega_sigma[:, 0],
        sh=fpo.omega_sh[:, :, 0],
    )


# --- JSON / image / CSV sidecars ---------------------------------------------


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def save_pose(camera: Camera, path) -> None:
    write_json(
        path,
        {
            "focal": camera.focal,
            "width": camera.width,
            "height": camera.height,
            "world_from_camera": camera.world_from_camera.reshape(16).tolist(),
        },
    )


def load_pose(path) -> Camera:
    spec = json.loads(Path(path).read_text())
    return Camera(
        world_from_camera=np.asarray(spec["world_from_camera"], dtype=np.float64),
        focal=float(spec["focal"]),
        width=int(spec["width"]),
        height=int(spec["height"]),
    )


def image_to_u8(img: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(img) * 255.0), 0, 255).astype(np.uint8)


def save_png(img: np.ndarray, path) -> None:
    Image.fromarray(image_to_u8(img), "RGB").save(Path(path), format="PNG")


def load_png(path) -> np.ndarray:
    with Image.open(Path(path)) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32)
    return arr / np.float32(255.0)


def _image_name(t: int, v: int) -> str:
    return f"t{t:03d}_v{v:03d}.png"


def save_dataset(dataset: PosedImages, out_dir) -> None:
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)

    cam0 = dataset.cameras[0]
    rig = [
        {"world_from_camera": cam.world_from_camera.reshape(16).tolist()}
        for cam in dataset.cameras
    ]
    write_json(
        out_dir / "poses.json",
        {
            "focal": cam0.focal,
            "width": cam0.width,
            "height": cam0.height,
            "frames": [{"t": t, "cameras": rig} for t in range(dataset.n_frames)],
        },
    )
    write_json(
        out_dir / "dataset.json",
        {
            "train": list(dataset.train_views),
            "test": list(dataset.test_views),
            "background": list(dataset.background),
        },
    )
    if dataset.scene is not None:
        (out_dir / "scene.json").write_text(dataset.scene)
    for t in range(dataset.n_frames):
        for v in range(dataset.n_views):
            save_png(dataset.images[t, v], out_dir / "images" / _image_name(t, v))


def load_dataset(in_dir) -> PosedImages:
    in_dir = Path(in_dir)
    poses = json.loads((in_dir / "poses.json").read_text())
    frames = sorted(poses["frames"], key=lambda f: f["t"])
    if [f["t"] for f in frames] != list(range(len(frames))):
        raise ValueError("poses.json frames must cover 0..T-1 exactly once")
    rig = frames[0]["cameras"]
    if any(f["cameras"] != rig for f in frames[1:]):
        raise ValueError("per-frame camera rigs must be identical")
    cameras = [
        Camera(
            world_from_camera=np.asarray(c["world_from_camera"], dtype=np.float64),
            focal=float(poses["focal"]),
            width=int(poses["width"]),
            height=int(poses["height"]),
        )
        for c in rig
    ]

    split = json.loads((in_dir / "dataset.json").read_text())
    images = np.stack(
        [
            np.stack(
                [
                    load_png(in_dir / "images" / _image_name(t, v))
                    for v in range(len(cameras))
                ]
            )
            for t in range(len(frames))
        ]
    )
    scene_path = in_dir / "scene.json"
    return PosedImages(
        cameras=cameras,
        images=images,
        train_views=list(split["train"]),
        test_views=list(split["test"]),
        background=tuple(split["background"]),
        scene=scene_path.read_text() if scene_path.exists() else None,
    )


def eval_report_csv(report: dict) -> str:
    """Per-view quality rows plus a trailing mean row, byte-stable."""
    lines = ["frame,view,psnr,ssim"]
    for row in report["rows"]:
        lines.append(
            "%d,%d,%.9g,%.9g" % (row["frame"], row["view"], row["psnr"], row["ssim"])
        )
    lines.append("mean,,%.9g,%.9g" % (report["mean_psnr"], report["mean_ssim"]))
    return "\n".join(lines) + "\n"
