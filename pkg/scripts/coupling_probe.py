"""Causal coupling readout for a trained checkpoint: move each keypoint input
directly and measure how far each palette blob follows (1.0 = full control).

Usage: python scripts/coupling_probe.py <checkpoint> [trials]
"""
import sys

import numpy as np
import torch

sys.path.insert(0, "src")
from kpgan.data import DEFAULT_PALETTE, locate_palette_objects
from kpgan.keypoint_generator import sample_latents
from kpgan.trainer import load_model

ckpt = sys.argv[1]
trials = int(sys.argv[2]) if len(sys.argv) > 2 else 15

model, _ = load_model(ckpt)
resolution = model.config.final_resolution


def blob_centers(img):
    out = {}
    for ci, color in enumerate(DEFAULT_PALETTE):
        boxes = locate_palette_objects(img, (color,))
        if boxes:
            x0, y0, x1, y1 = boxes[0]
            out[ci] = np.array([(x0 + x1) / 2, (y0 + y1) / 2]) / (resolution / 2) - 1.0
    return out


g = torch.Generator().manual_seed(5)
follow: dict = {}
with torch.no_grad():
    for _ in range(trials):
        lat = sample_latents(1, model.config.noise_dim, generator=g)
        scene = model.scene_from_latents(lat)
        base = blob_centers(model.render_scene(scene).image[0])
        for j in range(model.config.num_keypoints):
            for delta in ([0.25, 0.0], [0.0, 0.25]):
                probe = scene.copy()
                probe.coords = scene.coords.copy()
                probe.coords[j] = np.clip(probe.coords[j] + delta, -1, 1)
                moved = blob_centers(model.render_scene(probe).image[0])
                for ci in base:
                    if ci in moved:
                        proj = np.dot(moved[ci] - base[ci], np.array(delta)) / np.dot(delta, delta)
                        follow.setdefault((j, ci), []).append(proj)

for (j, ci), vals in sorted(follow.items()):
    print(f"keypoint {j} -> blob {ci}: follow {np.mean(vals):+.2f} (n={len(vals)})")
