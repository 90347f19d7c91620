"""Command-line entry points.

Exit codes: 0 success, 1 validation failure, 2 I/O error.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np
from PIL import Image

from .benchio import load_sample_dir, to_region_ops, validate_dataset
from .engine import DragConfig, load_latent, run_drag, save_latent
from .flow import (
    ConstantVelocity,
    LatentField,
    LinearNoisePredictor,
    NoiseSchedule,
    SelfConsistentLinearPredictor,
    roundtrip_drift,
    sin_velocity,
)
from .geometry import Mask2D, mask_to_png
from .metrics import MadDistance, SsimDistance, evaluate
from .region import build_gradient_mask
from .schedule import target_mask_at
from .suite import ablation_table, ring_blob_latent, run_suite


def _load_ops(sample_dir: Path):
    try:
        sample, masks = load_sample_dir(sample_dir)
    except FileNotFoundError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(2)
    return to_region_ops(sample, masks)


def _overlay_png(source: Mask2D, target: Mask2D, path: Path):
    """Blue source region, green step-k target region."""
    h, w = source.bits.shape
    rgb = np.zeros((h, w, 3), dtype=np.uint8)
    rgb[:, :, 2][source.bits] = 255
    rgb[:, :, 1][target.bits] = 255
    Image.fromarray(rgb, mode="RGB").save(path)


@click.group()
def main():
    """Region drag editing toolkit."""


@main.command()
@click.argument("sample_dir", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option("--k", default=None, type=int, help="single step to render (default: sequence)")
@click.option("--big-k", "-K", "big_k", default=50, show_default=True)
@click.option("--stride", default=5, show_default=True, help="step spacing for sequences")
@click.option("--out", type=click.Path(path_type=Path), default=Path("preview"))
def preview(sample_dir: Path, k: int | None, big_k: int, stride: int, out: Path):
    """Render step-k target mask overlays for a sample."""
    ops = _load_ops(sample_dir)
    out.mkdir(parents=True, exist_ok=True)
    ks = [k] if k is not None else list(range(0, big_k + 1, stride))
    for kk in ks:
        for i, op in enumerate(ops):
            target = target_mask_at(op, kk, big_k)
            _overlay_png(op.source_mask, target, out / f"op{i}_k{kk:03d}.png")
    click.echo(f"wrote {len(ks) * len(ops)} overlays to {out}")


@main.command()
@click.argument("sample_dir", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option("--latent", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--out", type=click.Path(path_type=Path), default=Path("run_out"))
def run(sample_dir: Path, latent: Path | None, config_path: Path | None, out: Path):
    """Run the drag optimization for a sample and write the result."""
    ops = _load_ops(sample_dir)
    config = (
        DragConfig.from_json(config_path.read_text()) if config_path else DragConfig()
    )
    if latent is not None:
        try:
            z0 = load_latent(latent)
        except Exception as e:
            click.echo(f"error reading latent: {e}", err=True)
            sys.exit(2)
    else:
        w, h = ops[0].source_mask.width, ops[0].source_mask.height
        from .geometry import centroid

        data = np.zeros((2, h, w))
        for i, op in enumerate(ops):
            c = centroid(op.source_mask)
            data = data + ring_blob_latent(c.x, c.y, i, width=w, height=h).data
        z0 = LatentField(data)
    try:
        result = run_drag(z0, ops, config)
    except Exception as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(1)
    out.mkdir(parents=True, exist_ok=True)
    (out / "result.json").write_text(result.to_json())
    save_latent(out / "final.dflt", result.final_z)
    save_latent(out / "initial.dflt", z0)
    click.echo(
        f"ran {result.iterations_run} iterations; "
        f"final loss {result.loss_trajectory[-1]:.4f}; wrote {out}/"
    )


@main.command("eval")
@click.argument("sample_dir", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option("--x", "x_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--edited", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--big-k", "-K", "big_k", default=50, show_default=True)
@click.option("--distance", type=click.Choice(["ssim", "mad"]), default="ssim")
@click.option("--json", "json_out", type=click.Path(path_type=Path))
def eval_cmd(sample_dir: Path, x_path: Path, edited: Path, big_k: int, distance: str, json_out: Path | None):
    """Score an edit: fidelity and mean-distance table."""
    ops = _load_ops(sample_dir)
    try:
        x = load_latent(x_path)
        ed = load_latent(edited)
    except Exception as e:
        click.echo(f"error reading latents: {e}", err=True)
        sys.exit(2)
    editable = build_gradient_mask(ops, x.width, x.height, big_k).mask
    dist = SsimDistance() if distance == "ssim" else MadDistance()
    try:
        report = evaluate(x.data, ed.data, ops, editable, big_k, distance=dist)
    except ValueError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(1)
    click.echo(report.to_table())
    if json_out:
        json_out.write_text(report.to_json())


@main.command()
@click.argument("dataset_dir", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option("--json", "json_out", type=click.Path(path_type=Path))
def validate(dataset_dir: Path, json_out: Path | None):
    """Validate every sample in a dataset directory."""
    report = validate_dataset(dataset_dir)
    click.echo(report.to_text())
    if json_out:
        json_out.write_text(report.to_json())
    if report.failed:
        sys.exit(1)


@main.command()
@click.argument("sample_dir", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option("--big-k", "-K", "big_k", default=50, show_default=True)
@click.option("--no-sweep", is_flag=True, help="endpoint rectangles only for rotations")
@click.option("--out", type=click.Path(path_type=Path), default=Path("gradient_mask.png"))
def mask(sample_dir: Path, big_k: int, no_sweep: bool, out: Path):
    """Write the editable-region mask for a sample as PNG."""
    ops = _load_ops(sample_dir)
    w, h = ops[0].source_mask.width, ops[0].source_mask.height
    gm = build_gradient_mask(ops, w, h, big_k, sweep=not no_sweep)
    mask_to_png(gm.mask, out)
    click.echo(f"wrote {out} ({gm.mask.count} editable cells)")


@main.command()
@click.option("--solver", type=click.Choice(["rf", "ddim"]), default="rf", show_default=True)
@click.option("--steps", default=32, show_default=True)
@click.option("--field", "field_kind", type=click.Choice(["sin", "const"]), default="sin", show_default=True)
@click.option("--predictor", type=click.Choice(["consistent", "raw"]), default="consistent",
              show_default=True, help="noise predictor for the ddim solver")
@click.option("--size", default=16, show_default=True)
@click.option("--json", "json_out", type=click.Path(path_type=Path))
def drift(solver: str, steps: int, field_kind: str, predictor: str, size: int, json_out: Path | None):
    """Measure invert-then-denoise reconstruction drift on a synthetic field."""
    rng = np.random.default_rng(0)
    z0 = LatentField(rng.standard_normal((1, size, size)) * 0.5)
    if solver == "rf":
        vel = sin_velocity() if field_kind == "sin" else ConstantVelocity(1.0)
        report = roundtrip_drift(z0, steps, "rf", vel)
    else:
        sched = NoiseSchedule(tuple([0.02] * steps))
        pred = (
            SelfConsistentLinearPredictor(sched, 0.5)
            if predictor == "consistent"
            else LinearNoisePredictor(0.5)
        )
        report = roundtrip_drift(z0, steps, "ddim", pred, sched=sched)
    click.echo(report.to_json())
    if json_out:
        json_out.write_text(report.to_json())


@main.command()
@click.option("--mode", type=click.Choice(["region", "point"]), default="region", show_default=True)
@click.option("--extractor", default="identity", show_default=True)
def suite(mode: str, extractor: str):
    """Run the synthetic drag suite and print per-case results."""
    spec = extractor if extractor != "pooled" else {"name": "pooled", "stride": 2, "sigma": 1.5}
    report = run_suite(mode, spec)
    for case in report.cases:
        cerr = f" centroid_err {case.centroid_error:5.2f}" if case.centroid_error is not None else ""
        click.echo(
            f"{case.name:<16} md1 {case.md1_initial:6.2f} -> {case.md1_final:6.2f}{cerr}"
        )
    click.echo(f"mean final md1 {report.mean_md1_final:.2f} ({report.elapsed_s:.1f}s)")


@main.command()
def ablation():
    """Region vs point supervision on fine and compressed features."""
    click.echo(ablation_table())


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8470, show_default=True)
@click.option("--ui-dir", type=click.Path(exists=True, file_okay=False), default=None,
              help="serve a built frontend directory at /ui")
def serve(host: str, port: int, ui_dir: str | None):
    """Start the local HTTP service (loopback by default)."""
    import uvicorn

    from .service import create_app

    if ui_dir is None:
        candidate = Path(__file__).resolve().parents[2] / "frontend"
        if (candidate / "index.html").exists() and (candidate / "dist").exists():
            ui_dir = str(candidate)
    if ui_dir:
        click.echo(f"ui available at http://{host}:{port}/ui/")
    uvicorn.run(create_app(ui_dir), host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
