"""Command line entry point.

Exit codes: 0 success, 1 runtime failure, 2 usage or parse error.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from . import config as config_mod
from .data import SyntheticShapesSpec, make_synthetic_dataset, open_dataset, save_image_png


@click.group()
def main():
    """Keypoint-conditioned GAN tools."""


@main.command("make-synthetic")
@click.option("--out", required=True, type=click.Path())
@click.option("--count", required=True, type=int)
@click.option("--size", default=64, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
def make_synthetic(out, count, size, seed):
    """Write a procedural shapes dataset with ground-truth object centers."""
    if count < 1:
        raise click.UsageError("--count must be >= 1")
    spec = SyntheticShapesSpec(image_size=size)
    handle, table = make_synthetic_dataset(spec, count, seed, out)
    click.echo(f"wrote {len(handle.file_list)} images and {len(table)} ground-truth rows to {out}")


@main.command("train")
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--variant", type=click.Choice(["default", "tuned"]))
@click.option("--resume", "resume_path", type=click.Path(exists=True))
@click.option("--deterministic", is_flag=True)
@click.option("--seed", type=int)
@click.option("--max-steps", type=int, help="Stop after this many steps of the schedule.")
@click.option("--smoke", is_flag=True, help="Start from the desk-scale preset instead of paper defaults.")
def train(config_path, data_dir, out_dir, variant, resume_path, deterministic, seed, max_steps, smoke):
    """Train on a directory of images; emits checkpoints into --out."""
    from .trainer import Trainer

    overrides = {}
    if variant:
        overrides["variant"] = variant
    if seed is not None:
        overrides["seed"] = seed
    if config_path:
        cfg = config_mod.read_config(config_path, **overrides)
    elif smoke:
        cfg = config_mod.smoke_config(**overrides)
    else:
        cfg = config_mod.TrainConfig(**overrides)
    dataset = open_dataset(data_dir, cfg.start_resolution, augment_crop=cfg.augment_crop)
    trainer = Trainer(cfg, dataset, out_dir, deterministic=deterministic)
    if resume_path:
        trainer.load(resume_path)
        click.echo(f"resumed from {resume_path} at step {trainer.global_step}")
    paths = trainer.train(max_steps=max_steps, log=click.echo)
    click.echo(f"finished at step {trainer.global_step}; checkpoints: {[str(p) for p in paths]}")


def _interocular_px(coords_px: np.ndarray) -> float:
    # distance between the first two keypoints; generated pairs have no eyes,
    # so the first pair plays that role in the landmark CSV schema
    return float(np.linalg.norm(coords_px[0] - coords_px[1])) if len(coords_px) > 1 else 1.0


def _export_samples(ckpt, count, seed, out, emit_keypoints):
    import torch

    from .detection import write_landmark_csv
    from .keypoint_generator import sample_latents
    from .trainer import load_model

    if count < 1:
        raise click.UsageError("--count must be >= 1")
    model, _ = load_model(ckpt)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    resolution = model.config.final_resolution
    rows = []
    remaining, start = count, 0
    from .rng import make_generator

    g = make_generator(seed)
    with torch.no_grad():
        while remaining > 0:
            n = min(32, remaining)
            latents = sample_latents(n, model.config.noise_dim, generator=g)
            sample = model.generate(latents)
            for i in range(n):
                name = f"sample_{start + i:06d}.png"
                save_image_png(sample.image[i], out / name)
                coords_px = (sample.coords[i].double().numpy() + 1.0) / 2.0 * resolution
                rows.append((name, coords_px, _interocular_px(coords_px)))
            start += n
            remaining -= n
    if emit_keypoints:
        write_landmark_csv(out / "keypoints.csv", rows)
    return out, rows


@main.command("generate")
@click.option("--ckpt", required=True, type=click.Path(exists=True))
@click.option("--count", required=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", required=True, type=click.Path())
@click.option("--emit-keypoints", is_flag=True)
def generate(ckpt, count, seed, out, emit_keypoints):
    """Render samples to PNG files, optionally with a keypoints CSV."""
    out, rows = _export_samples(ckpt, count, seed, out, emit_keypoints)
    click.echo(f"wrote {len(rows)} samples to {out}")


@main.command("export-pairs")
@click.option("--ckpt", required=True, type=click.Path(exists=True))
@click.option("--count", required=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", required=True, type=click.Path())
def export_pairs(ckpt, count, seed, out):
    """Export image-keypoint pairs (PNGs plus keypoints.csv)."""
    out, rows = _export_samples(ckpt, count, seed, out, emit_keypoints=True)
    click.echo(f"wrote {len(rows)} image-keypoint pairs to {out}")


@main.command("edit-batch")
@click.option("--ckpt", required=True, type=click.Path(exists=True))
@click.option("--scene", "scene_path", required=True, type=click.Path(exists=True))
@click.option("--ops", "ops_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
def edit_batch(ckpt, scene_path, ops_path, out_path):
    """Apply an edit-op list to a scene JSON and render the result."""
    import torch

    from .editing import apply_edit_ops, scene_from_json, scene_to_json
    from .trainer import load_model

    try:
        scene_doc = json.loads(Path(scene_path).read_text())
        ops = json.loads(Path(ops_path).read_text())
        scene = scene_from_json(scene_doc)
    except (json.JSONDecodeError, KeyError, ValueError, TypeError) as exc:
        raise click.UsageError(f"could not parse scene/ops: {exc}")
    if not isinstance(ops, list):
        raise click.UsageError("ops file must hold a JSON list of edit ops")
    try:
        edited = apply_edit_ops(scene, ops)
    except (ValueError, IndexError) as exc:
        raise click.UsageError(f"invalid edit op: {exc}")
    model, _ = load_model(ckpt)
    with torch.no_grad():
        sample = model.render_scene(edited)
    save_image_png(sample.image[0], out_path)
    click.echo(json.dumps(scene_to_json(edited)))


@main.command("detect-train")
@click.option("--ckpt", required=True, type=click.Path(exists=True))
@click.option("--pairs", default=200_000, show_default=True, type=int)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--epochs", default=3, show_default=True, type=int)
@click.option("--batch-size", default=64, show_default=True, type=int)
@click.option("--lr", default=1e-3, show_default=True, type=float)
@click.option("--seed", default=0, show_default=True, type=int)
def detect_train(ckpt, pairs, out_path, epochs, batch_size, lr, seed):
    """Train a keypoint detector on pairs generated by a checkpoint."""
    from .detection import save_detector, train_detector
    from .trainer import load_model

    model, _ = load_model(ckpt)
    detector, history = train_detector(
        model, pair_count=pairs, epochs=epochs, lr=lr,
        batch_size=batch_size, seed=seed, log=click.echo,
    )
    save_detector(out_path, detector, extra={"holdout_error": history["holdout_error"]})
    click.echo(f"saved detector to {out_path}; holdout error {history['holdout_error'][-1]:.5f}")


@main.command("detect-eval")
@click.option("--detector", "detector_path", required=True, type=click.Path(exists=True))
@click.option("--gt", "gt_path", required=True, type=click.Path(exists=True))
@click.option("--images", "images_dir", required=True, type=click.Path(exists=True))
@click.option("--batch-size", default=64, show_default=True, type=int)
def detect_eval(detector_path, gt_path, images_dir, batch_size):
    """Evaluate a detector against landmark ground truth (inter-ocular %)."""
    import torch

    from .data import load_image
    from .detection import evaluate_regression, load_detector, read_landmark_csv

    detector, _ = load_detector(detector_path)
    rows = read_landmark_csv(gt_path)
    if not rows:
        raise click.UsageError(f"{gt_path} holds no usable rows")
    images_dir = Path(images_dir)
    preds, gts, inters = [], [], []
    with torch.no_grad():
        for i in range(0, len(rows), batch_size):
            chunk = rows[i : i + batch_size]
            batch = torch.stack([load_image(images_dir / name) for name, _, _ in chunk])
            resolution = batch.shape[-1]
            pred = detector(batch).double().numpy()
            pred_px = (pred + 1.0) / 2.0 * resolution
            preds.append(pred_px.reshape(len(chunk), -1))
            gts.extend(lm for _, lm, _ in chunk)
            inters.extend(inter for _, _, inter in chunk)
    report = evaluate_regression(
        np.concatenate(preds), np.stack(gts), np.array(inters)
    )
    click.echo(
        json.dumps(
            {
                "mean_error_pct": report.mean_error_pct,
                "per_landmark_pct": report.per_landmark_pct,
                "rank_deficient": bool(report.rank_deficient),
                "excluded": int(report.excluded),
            }
        )
    )


@main.command("serve")
@click.option("--ckpt", required=True, type=click.Path(exists=True))
@click.option("--port", default=8000, show_default=True, type=int)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--persist", type=click.Path())
@click.option("--ttl-seconds", type=float)
@click.option("--static", "static_dir", type=click.Path(exists=True),
              help="Also serve a static frontend directory at /.")
def serve_cmd(ckpt, port, host, persist, ttl_seconds, static_dir):
    """Serve the editing HTTP API for one checkpoint."""
    from .service import serve

    serve(ckpt, port=port, persist_dir=persist, ttl_seconds=ttl_seconds, host=host,
          static_dir=static_dir)


if __name__ == "__main__":
    sys.exit(main())
