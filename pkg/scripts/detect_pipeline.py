"""Detection self-consistency experiment: train a detector on generated pairs
from a checkpoint and measure its error on held-out generations, relative to
the generator's own keypoint spread.

Usage: python scripts/detect_pipeline.py <checkpoint> [pairs] [epochs]
"""
import sys

import torch

sys.path.insert(0, "src")
from kpgan.detection import KeypointDetector, collect_pairs, save_detector, train_detector
from kpgan.trainer import load_model

ckpt = sys.argv[1]
pairs = int(sys.argv[2]) if len(sys.argv) > 2 else 20_000
epochs = int(sys.argv[3]) if len(sys.argv) > 3 else 3

model, _ = load_model(ckpt)
detector, history = train_detector(
    model,
    pair_count=pairs,
    epochs=epochs,
    seed=5,
    detector=KeypointDetector(model.config.num_keypoints, base_channels=24, depth=4),
    log=print,
)
print("holdout error per epoch:", [round(e, 5) for e in history["holdout_error"]])

images, coords = collect_pairs(model, 1000, seed=777, batch_size=50)
with torch.no_grad():
    pred = torch.cat([detector(images[i : i + 100]) for i in range(0, len(images), 100)])
mean_err = (pred - coords).norm(dim=-1).mean().item()
sigma = coords.std(dim=0).mean().item()
print(f"mean error {mean_err:.4f}  keypoint std {sigma:.4f}  ratio {mean_err / sigma:.3f} (target < 0.25)")

out = ckpt.replace(".kpck", "") + "_detector.kpck"
save_detector(out, detector, extra={"holdout_error": history["holdout_error"]})
print("saved detector to", out)
