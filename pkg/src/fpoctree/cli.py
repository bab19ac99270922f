"""Command-line pipeline around the codec and renderer.

Subcommands mirror the processing chain: render a synthetic dataset,
build per-frame trees, compress them into one Fourier tree, then
render, fine-tune, evaluate, or serve the result.  Diagnostic sweeps
land under ``analyze``.  Every command fails with a nonzero exit code
and a single-line ``error:`` diagnostic.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

import click
import numpy as np

from . import analysis, fileio
from .dataset import generate_dataset
from .encoding import EncodingConfig
from .finetune import TrainConfig, evaluate_split, finetune
from .octree import assemble_fpo, build_frame_octree
from .render import RenderParams, render_image
from .scenes import make_scene, scene_from_json, scene_names

ENCODINGS = {
    "none": EncodingConfig(use_log=False, use_comp=False),
    "log": EncodingConfig(use_log=True, use_comp=False),
    "comp": EncodingConfig(use_log=False, use_comp=True),
    "log+comp": EncodingConfig(use_log=True, use_comp=True),
}


def _parse_resolution(text: str) -> tuple[int, int]:
    try:
        w, h = (int(p) for p in text.lower().split("x"))
    except ValueError:
        raise click.BadParameter(f"expected WxH, got {text!r}")
    if w < 1 or h < 1:
        raise click.BadParameter("resolution must be positive")
    return w, h


@click.group()
def cli() -> None:
    """Dynamic radiance fields as Fourier-compressed octrees."""


@cli.group()
def scene() -> None:
    """Synthetic scene datasets."""


@scene.command("gen")
@click.option("--scene", "scene_name", required=True, type=click.Choice(scene_names()))
@click.option("--frames", required=True, type=click.IntRange(min=1))
@click.option("--views", required=True, type=click.IntRange(min=2))
@click.option("--res", required=True, help="Image size as WxH.")
@click.option("--out", required=True, type=click.Path(path_type=Path))
def scene_gen(scene_name: str, frames: int, views: int, res: str, out: Path) -> None:
    """Render oracle images for an analytic scene into a dataset directory."""
    width, height = _parse_resolution(res)
    dataset = generate_dataset(make_scene(scene_name, frames), views, width, height)
    fileio.save_dataset(dataset, out)
    click.echo(f"wrote {frames} frames x {views} views at {width}x{height} to {out}")


@cli.group()
def frames() -> None:
    """Per-frame octree snapshots."""


@frames.command("build")
@click.option("--dataset", "dataset_dir", required=True, type=click.Path(path_type=Path))
@click.option("--depth", required=True, type=click.IntRange(min=1, max=10))
@click.option("--out", required=True, type=click.Path(path_type=Path))
def frames_build(dataset_dir: Path, depth: int, out: Path) -> None:
    """Sample the dataset's analytic scene into one tree per frame."""
    scene_path = dataset_dir / "scene.json"
    if not scene_path.exists():
        raise click.ClickException(f"{dataset_dir} has no scene.json to sample")
    spec = scene_from_json(scene_path.read_text())
    out.mkdir(parents=True, exist_ok=True)
    for t in range(spec.n_frames):
        tree = build_frame_octree(spec.sample_fn(t), spec.center, spec.half_extent, depth)
        fileio.save_frame_tree(tree, out / f"frame_{t:03d}.fpo")
        click.echo(f"frame {t}: {tree.structure.leaf_count} leaves")


@cli.group("fpo")
def fpo_group() -> None:
    """Fourier tree operations."""


@fpo_group.command("compress")
@click.option("--frames", "frames_dir", required=True, type=click.Path(path_type=Path))
@click.option("--ksigma", required=True, type=click.IntRange(min=1))
@click.option("--kz", required=True, type=click.IntRange(min=1))
@click.option("--encoding", required=True, type=click.Choice(sorted(ENCODINGS)))
@click.option("--pad-endpoints", is_flag=True, default=False)
@click.option("--out", required=True, type=click.Path(path_type=Path))
def fpo_compress(
    frames_dir: Path, ksigma: int, kz: int, encoding: str, pad_endpoints: bool, out: Path
) -> None:
    """Assemble per-frame trees into one Fourier-coefficient tree."""
    paths = sorted(frames_dir.glob("frame_*.fpo"))
    if not paths:
        raise click.ClickException(f"no frame_*.fpo files under {frames_dir}")
    trees = [fileio.load_frame_tree(p) for p in paths]
    fpo = assemble_fpo(trees, ENCODINGS[encoding], ksigma, kz, pad_endpoints)
    fileio.save_fpo(fpo, out)
    click.echo(
        f"compressed {len(trees)} frames into {fpo.leaf_count} leaves "
        f"({out.stat().st_size} bytes)"
    )


@fpo_group.command("render")
@click.option("--fpo", "fpo_path", required=True, type=click.Path(path_type=Path))
@click.option("--pose", required=True, type=click.Path(path_type=Path))
@click.option("--time", "time_step", required=True, type=click.IntRange(min=0))
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.option("--stats", "stats_path", type=click.Path(path_type=Path))
def fpo_render(
    fpo_path: Path, pose: Path, time_step: int, out: Path, stats_path: Path | None
) -> None:
    """Render one frame to PNG, optionally with a stats JSON."""
    fpo = fileio.load_fpo(fpo_path)
    camera = fileio.load_pose(pose)
    image, stats = render_image(fpo, camera, time_step, RenderParams(decode_cache=True))
    fileio.save_png(image, out)
    if stats_path is not None:
        fileio.write_json(stats_path, stats)
    click.echo(
        f"rendered t={time_step} in {stats['wall_ms']:.1f} ms "
        f"({stats['color_evals']} colour evals)"
    )


@fpo_group.command("finetune")
@click.option("--fpo", "fpo_path", required=True, type=click.Path(path_type=Path))
@click.option("--dataset", "dataset_dir", required=True, type=click.Path(path_type=Path))
@click.option("--epochs", required=True, type=click.IntRange(min=0))
@click.option("--lr", default=1e-2, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path(path_type=Path))
def fpo_finetune(
    fpo_path: Path, dataset_dir: Path, epochs: int, lr: float, seed: int, out: Path
) -> None:
    """Optimise coefficients against the dataset's training views."""
    fpo = fileio.load_fpo(fpo_path)
    dataset = fileio.load_dataset(dataset_dir)
    history = finetune(fpo, dataset, epochs, TrainConfig(lr=lr), seed=seed)
    for row in history:
        click.echo(
            f"epoch {row['epoch']}: loss {row['train_loss']:.6g} "
            f"val_psnr {row['val_psnr']:.2f} ({row['wall_s']:.1f}s)"
        )
    fileio.save_fpo(fpo, out)
    click.echo(f"saved fine-tuned tree to {out}")


@fpo_group.command("eval")
@click.option("--fpo", "fpo_path", required=True, type=click.Path(path_type=Path))
@click.option("--dataset", "dataset_dir", required=True, type=click.Path(path_type=Path))
@click.option("--split", default="test", show_default=True,
              type=click.Choice(["train", "test", "all"]))
@click.option("--out", required=True, type=click.Path(path_type=Path))
def fpo_eval(fpo_path: Path, dataset_dir: Path, split: str, out: Path) -> None:
    """Report per-view PSNR/SSIM against reference images as CSV."""
    fpo = fileio.load_fpo(fpo_path)
    dataset = fileio.load_dataset(dataset_dir)
    report = evaluate_split(fpo, dataset, split)
    Path(out).write_text(fileio.eval_report_csv(report))
    click.echo(
        f"{split}: mean_psnr {report['mean_psnr']:.2f} mean_ssim {report['mean_ssim']:.4f}"
    )


@cli.group()
def analyze() -> None:
    """Diagnostic sweeps, emitted as CSV."""


@analyze.command("falloff")
@click.option("--source", default="impulse", show_default=True,
              type=click.Choice(["impulse", "orbit"]))
@click.option("--frames", "n_frames", default=16, show_default=True,
              type=click.IntRange(min=2))
@click.option("--depth", default=4, show_default=True, type=click.IntRange(min=1, max=10))
@click.option("--out", required=True, type=click.Path(path_type=Path))
def analyze_falloff(source: str, n_frames: int, depth: int, out: Path) -> None:
    """Peak attenuation versus coefficient budget."""
    if source == "impulse":
        signal = np.zeros(n_frames)
        signal[0] = 1.0
    else:
        spec = make_scene("orbit", n_frames)
        trees = [
            build_frame_octree(spec.sample_fn(t), spec.center, spec.half_extent, depth)
            for t in range(n_frames)
        ]
        from .octree import frame_series
        from .structure import unify_structures

        sigma, _ = frame_series(trees, unify_structures([t.structure for t in trees]))
        signal = analysis.densest_series(sigma)
    rows = analysis.peak_falloff_sweep(signal, list(range(1, 2 * n_frames, 2)))
    Path(out).write_text(analysis.rows_to_csv(rows))
    click.echo(f"wrote {len(rows)} budgets for {source} signal to {out}")


@analyze.command("transfer")
@click.option("--frames", "n_frames", default=60, show_default=True,
              type=click.IntRange(min=2))
@click.option("--k", default=30, show_default=True, type=click.IntRange(min=1))
@click.option("--delta", default=analysis.DEFAULT_DELTA, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path(path_type=Path))
def analyze_transfer(n_frames: int, k: int, delta: float, seed: int, out: Path) -> None:
    """Reconstruction error before and after the opacity transfer.

    Emits plain and log rows for a spiky signal, plus the same signal
    scaled by 10 to expose how the transfer saturates large peaks.
    """
    signal = analysis.spiky_signal(np.random.default_rng(seed), n_frames)
    rows = analysis.transfer_rows(signal, k, delta)
    rows += [
        dataclasses.replace(row, variant=row.variant + "_x10")
        for row in analysis.transfer_rows(10.0 * signal, k, delta)
    ]
    Path(out).write_text(analysis.rows_to_csv(rows))
    click.echo(f"wrote {len(rows)} variants to {out}")


@cli.command()
@click.option("--fpo", "fpo_path", required=True, type=click.Path(path_type=Path))
@click.option("--port", default=8000, show_default=True, type=click.IntRange(1, 65535))
def serve(fpo_path: Path, port: int) -> None:
    """Serve the renderer over HTTP/WebSocket on 127.0.0.1."""
    import uvicorn

    from .service import create_app

    app = create_app(fileio.load_fpo(fpo_path))
    click.echo(f"serving {fpo_path} on 127.0.0.1:{port}")
    uvicorn.run(app, host="127.0.0.1", port=port, log_level="warning")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        click.echo(f"error: {exc.format_message()}", err=True)
        return exc.exit_code
    except click.Abort:
        click.echo("error: aborted", err=True)
        return 1
    except Exception as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
