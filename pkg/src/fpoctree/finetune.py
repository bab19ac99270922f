"""Gradient fine-tuning of Fourier coefficients against posed images.

The training forward pass mirrors the renderer in float64 but never
terminates early, so every residual reaches every coefficient it
depends on.  Backpropagation is written out explicitly: the loss is the
unaveraged sum of squared channel differences, and each partial flows
through the sigmoid (s * (1 - s)), the SH contraction, the accumulation
weights including all downstream transmittance terms, the free-space
clip (subgradient zero at and below zero), the exponential density
decode when the logarithmic encoding is active, and the synthesis
column that couples a frame to every coefficient.

Updates use Adam on the float32 payloads.  Moment rows change only when
a batch touches their leaf; bias correction uses the global step count.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.special import expit

from . import fourier
from .camera import generate_rays
from .dataset import PosedImages
from .metrics import psnr, ssim
from .octree import FourierPlenOctree
from .render import RenderParams, render_image
from .sh import SH_DIM, eval_sh_basis
from .traversal import SegmentBatch, traverse_rays

NEAR = 1e-3
FAR = 1e6


class TrainingDivergedError(RuntimeError):
    """Raised when the optimisation leaves the stable regime."""


@dataclass(frozen=True)
class TrainConfig:
    """Adam hyperparameters and loop settings."""

    lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 4096
    divergence_factor: float = 10.0
    val_pairs: int = 4

    def __post_init__(self) -> None:
        if self.lr < 0:
            raise ValueError("lr must be >= 0")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("betas must lie in [0, 1)")
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.divergence_factor <= 1.0:
            raise ValueError("divergence_factor must exceed 1")
        if self.val_pairs < 1:
            raise ValueError("val_pairs must be >= 1")


@dataclass
class RayBatch:
    """Rays with per-ray frame indices and target colours."""

    origins: np.ndarray
    dirs: np.ndarray
    time_steps: np.ndarray
    target_rgb: np.ndarray

    def __post_init__(self) -> None:
        self.origins = np.ascontiguousarray(self.origins, dtype=np.float64).reshape(-1, 3)
        n = self.origins.shape[0]
        self.dirs = np.ascontiguousarray(self.dirs, dtype=np.float64).reshape(n, 3)
        self.time_steps = np.asarray(self.time_steps, dtype=np.int64).reshape(n)
        self.target_rgb = np.asarray(self.target_rgb, dtype=np.float64).reshape(n, 3)
        if not np.all(np.isfinite(self.target_rgb)):
            raise ValueError("target colours must be finite")

    @property
    def n_rays(self) -> int:
        return self.origins.shape[0]


@dataclass
class GradientStore:
    """Dense per-leaf coefficient gradients."""

    sigma: np.ndarray  # (leaf_count, k_sigma) float64
    sh: np.ndarray  # (leaf_count, SH_DIM * 3, k_sh) float64

    @classmethod
    def zeros(cls, fpo: FourierPlenOctree) -> "GradientStore":
        n = fpo.leaf_count
        return cls(
            np.zeros((n, fpo.k_sigma)),
            np.zeros((n, SH_DIM * 3, fpo.k_sh)),
        )


def squared_error(pred: np.ndarray, target: np.ndarray) -> float:
    """Sum of squared per-channel differences, no averaging."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    diff = pred - target
    return float(np.sum(diff * diff))


def _data_basis(fpo: FourierPlenOctree) -> tuple[np.ndarray, np.ndarray]:
    """Synthesis columns for every data frame; shapes (k, n_frames)."""
    cols = np.arange(fpo.n_frames) + fpo.frame_offset
    bs = fourier.idft_matrix(fpo.k_sigma, fpo.basis_frames)[:, cols]
    bz = fourier.idft_matrix(fpo.k_sh, fpo.basis_frames)[:, cols]
    return np.ascontiguousarray(bs), np.ascontiguousarray(bz)


def traverse_for_frames(
    fpo: FourierPlenOctree,
    origins: np.ndarray,
    dirs: np.ndarray,
    time_steps: np.ndarray,
    near: float = NEAR,
    far: float = FAR,
    packed_children: np.ndarray | None = None,
) -> SegmentBatch:
    """Traverse rays that may sit at different frames.

    When every frame shares one box a single traversal serves all rays;
    otherwise rays group by frame and the per-frame results reassemble
    into the original ray order.
    """
    origins = np.ascontiguousarray(origins, dtype=np.float64)
    dirs = np.ascontiguousarray(dirs, dtype=np.float64)
    time_steps = np.asarray(time_steps, dtype=np.int64)
    if packed_children is None:
        packed_children = fpo.structure.packed_children()
    for t in np.unique(time_steps):
        fpo.check_frame(int(t))
    if origins.shape[0] == 0 or np.all(fpo.centers == fpo.centers[0]):
        return traverse_rays(
            fpo.structure, fpo.box_min(0), fpo.box_size, origins, dirs, near, far,
            packed_children,
        )

    n = origins.shape[0]
    counts = np.zeros(n, dtype=np.int64)
    pieces = []
    for t in np.unique(time_steps):
        sel = np.flatnonzero(time_steps == t)
        sub = traverse_rays(
            fpo.structure, fpo.box_min(int(t)), fpo.box_size,
            origins[sel], dirs[sel], near, far, packed_children,
        )
        counts[sel] = np.diff(sub.offsets)
        pieces.append((sel, sub))
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    leaf = np.empty(offsets[-1], dtype=np.int64)
    t0 = np.empty(offsets[-1])
    t1 = np.empty(offsets[-1])
    for sel, sub in pieces:
        lens = np.diff(sub.offsets)
        local = np.arange(sub.n_segments, dtype=np.int64)
        local -= np.repeat(sub.offsets[:-1], lens)
        dst = np.repeat(offsets[sel], lens) + local
        leaf[dst] = sub.leaf
        t0[dst] = sub.t_enter
        t1[dst] = sub.t_exit
    return SegmentBatch(offsets, leaf, t0, t1)


def _forward_backward(
    fpo: FourierPlenOctree,
    batch: RayBatch,
    segments: SegmentBatch | None,
    background,
    want_grad: bool,
    basis: tuple[np.ndarray, np.ndarray] | None = None,
    near: float = NEAR,
    far: float = FAR,
):
    """Shared forward/backward core.

    Returns (loss, pred, grads) where grads is None without gradient
    work and otherwise a compact triple (rows, d_sigma, d_sh) covering
    exactly the leaves the batch touched.
    """
    n_rays = batch.n_rays
    bg = np.asarray(background, dtype=np.float64).reshape(3)
    if segments is None:
        segments = traverse_for_frames(fpo, batch.origins, batch.dirs, batch.time_steps, near, far)
    if basis is None:
        basis = _data_basis(fpo)
    bs_data, bz_data = basis

    ridx = segments.ray_index()
    td = batch.time_steps[ridx]
    leaf = segments.leaf
    delta = segments.t_exit - segments.t_enter
    m = leaf.size

    y = np.einsum("mk,km->m", fpo.omega_sigma[leaf].astype(np.float64), bs_data[:, td])
    sigma = np.zeros(m)
    dsdy = np.zeros(m)
    pos = y > 0.0
    if fpo.config.use_log:
        with np.errstate(over="ignore"):
            sigma[pos] = np.expm1(y[pos])
            dsdy[pos] = np.exp(y[pos])
        if not np.all(np.isfinite(sigma)):
            raise FloatingPointError("decoded density overflowed")
    else:
        sigma[pos] = y[pos]
        dsdy[pos] = 1.0

    s = sigma * delta
    cs = np.cumsum(s)
    excl = cs - s
    base = excl[segments.offsets[:-1][ridx]]
    trans_in = np.exp(base - excl)
    trans_out = np.exp(base - cs)
    alpha = -np.expm1(-s)
    weight = trans_in * alpha

    col = np.zeros((m, 3))
    lit = sigma > 0.0
    any_lit = bool(lit.any())
    if any_lit:
        z = np.einsum(
            "mak,km->ma", fpo.omega_sh[leaf[lit]].astype(np.float64), bz_data[:, td[lit]]
        )
        sh_vals = eval_sh_basis(batch.dirs[ridx[lit]])
        pre = np.einsum("mi,mic->mc", sh_vals, z.reshape(-1, SH_DIM, 3))
        col[lit] = expit(pre)

    total = np.bincount(ridx, weights=s, minlength=n_rays)
    trans_end = np.exp(-total)
    acc = np.stack(
        [np.bincount(ridx, weights=weight * col[:, c], minlength=n_rays) for c in range(3)],
        axis=1,
    )
    pred = acc + trans_end[:, None] * bg
    resid = pred - batch.target_rgb
    loss = float(np.sum(resid * resid))
    if not want_grad:
        return loss, pred, None

    g = 2.0 * resid
    gseg = g[ridx]
    u = np.einsum("mc,mc->m", gseg, col)
    wu = weight * u
    cs2 = np.cumsum(wu)
    last = segments.offsets[1:][ridx] - 1
    suffix = cs2[last] - cs2
    downstream = suffix + (trans_end * (g @ bg))[ridx]
    dl_dy = (trans_out * u - downstream) * delta * dsdy

    rows, inv = np.unique(leaf, return_inverse=True)
    n_frames = fpo.n_frames
    sig_time = np.zeros((rows.size, n_frames))
    np.add.at(sig_time, (inv, td), dl_dy)
    d_sigma = sig_time @ bs_data.T

    d_sh = np.zeros((rows.size, SH_DIM * 3, fpo.k_sh))
    if any_lit:
        dl_dpre = gseg[lit] * weight[lit][:, None] * col[lit] * (1.0 - col[lit])
        dl_dz = (sh_vals[:, :, None] * dl_dpre[:, None, :]).reshape(-1, SH_DIM * 3)
        keys = inv[lit] * n_frames + td[lit]
        pair, pair_inv = np.unique(keys, return_inverse=True)
        z_time = np.zeros((pair.size, SH_DIM * 3))
        np.add.at(z_time, pair_inv, dl_dz)
        np.add.at(
            d_sh,
            pair // n_frames,
            z_time[:, :, None] * bz_data[:, pair % n_frames].T[:, None, :],
        )
    return loss, pred, (rows, d_sigma, d_sh)


def render_forward(
    fpo: FourierPlenOctree,
    batch: RayBatch,
    background=(0.0, 0.0, 0.0),
    segments: SegmentBatch | None = None,
) -> np.ndarray:
    """Training-path colours for a batch; (n_rays, 3) float64, unclipped."""
    _, pred, _ = _forward_backward(fpo, batch, segments, background, want_grad=False)
    return pred


def loss_and_gradients(
    fpo: FourierPlenOctree,
    batch: RayBatch,
    background=(0.0, 0.0, 0.0),
    segments: SegmentBatch | None = None,
) -> tuple[float, np.ndarray, GradientStore]:
    """Loss, predicted colours, and dense coefficient gradients."""
    loss, pred, grads = _forward_backward(fpo, batch, segments, background, want_grad=True)
    store = GradientStore.zeros(fpo)
    rows, d_sigma, d_sh = grads
    store.sigma[rows] = d_sigma
    store.sh[rows] = d_sh
    return loss, pred, store


@dataclass
class AdamState:
    """First/second moment estimates matching the payload layout."""

    m_sigma: np.ndarray
    v_sigma: np.ndarray
    m_sh: np.ndarray
    v_sh: np.ndarray
    step: int = 0

    @classmethod
    def for_tree(cls, fpo: FourierPlenOctree) -> "AdamState":
        return cls(
            np.zeros_like(fpo.omega_sigma),
            np.zeros_like(fpo.omega_sigma),
            np.zeros_like(fpo.omega_sh),
            np.zeros_like(fpo.omega_sh),
        )

    def apply(self, fpo, rows, grad_sigma, grad_sh, config: TrainConfig) -> None:
        """One update on the touched rows; the step count is global."""
        self.step += 1
        if rows.size == 0:
            return
        bc1 = 1.0 - config.beta1**self.step
        bc2 = 1.0 - config.beta2**self.step
        leaf_count = fpo.omega_sh.shape[0]
        _adam_rows(
            fpo.omega_sigma, self.m_sigma, self.v_sigma, rows, grad_sigma,
            config.lr, config.beta1, config.beta2, config.eps, bc1, bc2,
        )
        _adam_rows(
            fpo.omega_sh.reshape(leaf_count, -1),
            self.m_sh.reshape(leaf_count, -1),
            self.v_sh.reshape(leaf_count, -1),
            rows,
            grad_sh.reshape(rows.size, -1),
            config.lr, config.beta1, config.beta2, config.eps, bc1, bc2,
        )


@njit(cache=True)
def _adam_rows(param, m_store, v_store, rows, grad, lr, beta1, beta2, eps, bc1, bc2):
    # Moments update in float64 and store back as float32, one fused pass.
    for i in range(rows.size):
        r = rows[i]
        for c in range(param.shape[1]):
            g = grad[i, c]
            m = beta1 * np.float64(m_store[r, c]) + (1.0 - beta1) * g
            v = beta2 * np.float64(v_store[r, c]) + (1.0 - beta2) * g * g
            m_store[r, c] = np.float32(m)
            v_store[r, c] = np.float32(v)
            delta = lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
            param[r, c] = np.float32(np.float64(param[r, c]) - delta)


class _RayPool:
    """Flattened train-view rays, their targets, and cached traversal.

    When every frame shares one box the full pool is traversed once up
    front (in chunks, to bound the per-call scratch) and batches gather
    their segment rows; otherwise traversal happens per batch.
    """

    def __init__(self, fpo: FourierPlenOctree, dataset: PosedImages, chunk: int = 32768):
        self.fpo = fpo
        cams = [dataset.cameras[v] for v in dataset.train_views]
        if not cams:
            raise ValueError("dataset has no training views")
        parts = [generate_rays(c) for c in cams]
        self.origins = np.concatenate([p[0] for p in parts])
        self.dirs = np.concatenate([p[1] for p in parts])
        self.pixels = dataset.width * dataset.height
        self.view_ids = np.asarray(dataset.train_views, dtype=np.int64)
        self.images = dataset.images.reshape(
            dataset.n_frames, dataset.n_views, self.pixels, 3
        )
        self.rays_per_frame = len(cams) * self.pixels
        self.total = dataset.n_frames * self.rays_per_frame
        self.basis = _data_basis(fpo)
        self.packed = fpo.structure.packed_children()
        self.segments = None
        if np.all(fpo.centers == fpo.centers[0]):
            self.segments = self._traverse_all(chunk)

    def _traverse_all(self, chunk: int) -> SegmentBatch:
        parts = []
        for lo in range(0, self.origins.shape[0], chunk):
            parts.append(
                traverse_rays(
                    self.fpo.structure,
                    self.fpo.box_min(0),
                    self.fpo.box_size,
                    self.origins[lo : lo + chunk],
                    self.dirs[lo : lo + chunk],
                    NEAR,
                    FAR,
                    self.packed,
                )
            )
        offsets = [np.zeros(1, dtype=np.int64)]
        base = 0
        for p in parts:
            offsets.append(p.offsets[1:] + base)
            base += p.offsets[-1]
        return SegmentBatch(
            np.concatenate(offsets),
            np.concatenate([p.leaf for p in parts]),
            np.concatenate([p.t_enter for p in parts]),
            np.concatenate([p.t_exit for p in parts]),
        )

    def batch(self, ids: np.ndarray) -> tuple[RayBatch, SegmentBatch | None]:
        t = ids // self.rays_per_frame
        ray = ids - t * self.rays_per_frame
        view = ray // self.pixels
        pixel = ray - view * self.pixels
        target = self.images[t, self.view_ids[view], pixel]
        batch = RayBatch(self.origins[ray], self.dirs[ray], t, target)
        segments = self.segments.gather(ray) if self.segments is not None else None
        return batch, segments


def _validation_pairs(dataset: PosedImages, k: int) -> list[tuple[int, int]]:
    views = dataset.test_views or dataset.train_views
    grid = [(t, v) for t in range(dataset.n_frames) for v in views]
    if len(grid) <= k:
        return grid
    idx = np.unique(np.linspace(0, len(grid) - 1, k).round().astype(int))
    return [grid[i] for i in idx]


def _validation_psnr(fpo, dataset, pairs, background) -> float:
    params = RenderParams(background=tuple(background), decode_cache=True)
    vals = []
    for t, v in pairs:
        img, _ = render_image(fpo, dataset.cameras[v], t, params)
        vals.append(psnr(img, dataset.images[t, v].astype(np.float64)))
    return float(np.mean(vals))


def finetune(
    fpo: FourierPlenOctree,
    dataset: PosedImages,
    epochs: int,
    config: TrainConfig | None = None,
    seed: int = 0,
    background=None,
) -> list[dict]:
    """Optimise ``fpo`` in place against the dataset's training views.

    Returns one history row per epoch: epoch number, summed training
    loss, validation PSNR over a small fixed (frame, view) subset, and
    wall seconds.  ``epochs=0`` touches nothing; ``lr=0`` leaves every
    payload bit identical.  Optimisation aborts with
    :class:`TrainingDivergedError` on a non-finite batch loss or when an
    epoch's loss exceeds ``divergence_factor`` times the first epoch's.
    Identical arguments produce identical runs.
    """
    config = config or TrainConfig()
    if epochs < 0:
        raise ValueError("epochs must be >= 0")
    if fpo.n_frames != dataset.n_frames:
        raise ValueError(
            f"tree spans {fpo.n_frames} frames but dataset has {dataset.n_frames}"
        )
    history: list[dict] = []
    if epochs == 0:
        return history
    bg = dataset.background if background is None else tuple(background)
    rng = np.random.default_rng(seed)
    pool = _RayPool(fpo, dataset)
    pairs = _validation_pairs(dataset, config.val_pairs)
    adam = AdamState.for_tree(fpo)
    first_loss = None
    for epoch in range(1, epochs + 1):
        tic = time.perf_counter()
        order = rng.permutation(pool.total)
        epoch_loss = 0.0
        for lo in range(0, pool.total, config.batch_size):
            batch, segments = pool.batch(order[lo : lo + config.batch_size])
            try:
                loss, _, grads = _forward_backward(
                    fpo, batch, segments, bg, want_grad=True, basis=pool.basis
                )
            except FloatingPointError as err:
                raise TrainingDivergedError(f"epoch {epoch}: {err}") from err
            if not math.isfinite(loss):
                raise TrainingDivergedError(f"epoch {epoch}: non-finite batch loss")
            adam.apply(fpo, *grads, config)
            epoch_loss += loss
        fpo.invalidate_cache()
        history.append(
            {
                "epoch": epoch,
                "train_loss": epoch_loss,
                "val_psnr": _validation_psnr(fpo, dataset, pairs, bg),
                "wall_s": time.perf_counter() - tic,
            }
        )
        if first_loss is None:
            first_loss = epoch_loss
        elif epoch_loss > config.divergence_factor * first_loss:
            raise TrainingDivergedError(
                f"epoch {epoch} loss {epoch_loss:.6g} exceeds "
                f"{config.divergence_factor}x the first epoch's {first_loss:.6g}"
            )
    return history


def evaluate_split(
    fpo: FourierPlenOctree,
    dataset: PosedImages,
    split: str = "test",
    params: RenderParams | None = None,
    frames=None,
    with_ssim: bool = True,
) -> dict:
    """Render a view split against its reference images.

    Returns per-(frame, view) rows with PSNR (and SSIM unless disabled)
    plus aggregate means and, when the renderer counts them, the total
    number of colour evaluations.
    """
    if split == "test":
        views = dataset.test_views
    elif split == "train":
        views = dataset.train_views
    elif split == "all":
        views = list(range(dataset.n_views))
    else:
        raise ValueError(f"unknown split {split!r}")
    if not views:
        raise ValueError(f"split {split!r} holds no views")
    if params is None:
        params = RenderParams(background=dataset.background, decode_cache=True)
    if frames is None:
        frames = range(fpo.n_frames)

    rows = []
    for t in frames:
        for v in views:
            img, stats = render_image(fpo, dataset.cameras[v], t, params)
            ref = dataset.images[t, v].astype(np.float64)
            row = {
                "frame": int(t),
                "view": int(v),
                "psnr": psnr(img, ref),
                "wall_ms": stats["wall_ms"],
            }
            if with_ssim:
                row["ssim"] = ssim(img, ref)
            if "color_evals" in stats:
                row["color_evals"] = stats["color_evals"]
            rows.append(row)
    report = {
        "rows": rows,
        "mean_psnr": float(np.mean([r["psnr"] for r in rows])),
    }
    if with_ssim:
        report["mean_ssim"] = float(np.mean([r["ssim"] for r in rows]))
    if rows and "color_evals" in rows[0]:
        report["total_color_evals"] = int(sum(r["color_evals"] for r in rows))
    return report
