"""Fourier PlenOctree codec, renderer, and tooling for dynamic volumes."""

from .analysis import (
    SweepRow,
    densest_series,
    peak_falloff_sweep,
    rows_to_csv,
    spiky_signal,
    transfer_error_study,
)
from .camera import Camera, camera_rig, generate_rays, rig_focal, train_test_split
from .dataset import PosedImages, generate_dataset
from .encoding import (
    EncodingConfig,
    decode_density,
    decode_log,
    encode_comp,
    encode_density_sequence,
    encode_log,
    scaling_ratio,
)
from .fileio import (
    FpoFormatError,
    load_dataset,
    load_fpo,
    load_frame_tree,
    save_dataset,
    save_fpo,
    save_frame_tree,
)
from .finetune import TrainConfig, TrainingDivergedError, evaluate_split, finetune
from .fourier import (
    FourierCoeffs,
    compress,
    compress_series,
    dft_basis,
    dft_matrix,
    idft_basis,
    idft_matrix,
    max_coefficients,
    reconstruct,
)
from .metrics import psnr, ssim
from .octree import (
    FourierPlenOctree,
    FramePlenOctree,
    assemble_fpo,
    build_frame_octree,
    frame_series,
)
from .render import RenderParams, render_image, render_rays
from .scenes import SceneSpec, make_scene, oracle_render, scene_from_json, scene_names
from .service import create_app
from .structure import OctreeStructure, structure_from_voxels, unify_structures

__version__ = "0.1.0"

__all__ = [
    "Camera",
    "EncodingConfig",
    "FourierCoeffs",
    "FourierPlenOctree",
    "FpoFormatError",
    "FramePlenOctree",
    "OctreeStructure",
    "PosedImages",
    "RenderParams",
    "SceneSpec",
    "SweepRow",
    "TrainConfig",
    "TrainingDivergedError",
    "assemble_fpo",
    "build_frame_octree",
    "camera_rig",
    "compress",
    "compress_series",
    "create_app",
    "decode_density",
    "decode_log",
    "densest_series",
    "dft_basis",
    "dft_matrix",
    "encode_comp",
    "encode_density_sequence",
    "encode_log",
    "evaluate_split",
    "finetune",
    "frame_series",
    "generate_dataset",
    "generate_rays",
    "idft_basis",
    "idft_matrix",
    "load_dataset",
    "load_fpo",
    "load_frame_tree",
    "make_scene",
    "max_coefficients",
    "oracle_render",
    "peak_falloff_sweep",
    "psnr",
    "reconstruct",
    "render_image",
    "render_rays",
    "rig_focal",
    "rows_to_csv",
    "save_dataset",
    "save_fpo",
    "save_frame_tree",
    "scaling_ratio",
    "scene_from_json",
    "scene_names",
    "spiky_signal",
    "ssim",
    "structure_from_voxels",
    "train_test_split",
    "transfer_error_study",
    "unify_structures",
    "__version__",
]
