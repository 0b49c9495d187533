"""Edit battery demo: sample two scenes from a checkpoint and write renders of
the standard edits (move, scale, pose interpolation, embedding swap and
interpolation, background swap, add/remove part).

Usage: python scripts/edit_demo.py <checkpoint> [out_dir]
"""
import sys
from pathlib import Path

import torch

sys.path.insert(0, "src")
from kpgan import editing
from kpgan.data import save_image_png
from kpgan.keypoint_generator import sample_latents
from kpgan.trainer import load_model

ckpt = sys.argv[1] if len(sys.argv) > 1 else ".cache/exp_p1/probe.kpck"
out = Path(sys.argv[2] if len(sys.argv) > 2 else ".cache/edit_demo")
out.mkdir(parents=True, exist_ok=True)

model, _ = load_model(ckpt)
scene = model.scene_from_latents(sample_latents(1, model.config.noise_dim, seed=11))
other = model.scene_from_latents(sample_latents(1, model.config.noise_dim, seed=23))

edits = {
    "original": scene,
    "source": other,
    "moved": editing.move_keypoints(scene, [0], (0.25, 0.0)),
    "scaled_085": editing.scale_about_centroid(scene, 0.85),
    "scaled_115": editing.scale_about_centroid(scene, 1.15),
    "pose_mid": editing.interpolate_pose(scene, other, 0.5),
    "swap_all_embeddings": editing.swap_embeddings(scene, other, range(scene.k)),
    "embed_mid": editing.interpolate_embeddings(scene, other, range(scene.k), 0.5),
    "swap_background": editing.swap_background(scene, other),
    "added_part": editing.add_part(scene, (0.5, 0.5), source_index=0),
    "removed_part": editing.remove_part(scene, 0),
}

with torch.no_grad():
    for name, state in edits.items():
        sample = model.render_scene(state)
        save_image_png(sample.image[0], out / f"{name}.png")
        print(f"{name}: coords {state.coords.round(3).tolist()} active {state.active.tolist()}")
print("wrote", len(edits), "renders to", out)
