"""Acceptance-strength detector evaluation for one checkpoint:
20k generated pairs, 3 epochs, then the 1k held-out self-consistency ratio.

Usage: python scripts/strong_detector_eval.py <checkpoint> [pairs] [epochs]
"""
import sys

import torch

sys.path.insert(0, "src")
from kpgan.detection import KeypointDetector, collect_pairs, train_detector
from kpgan.trainer import load_model

ckpt = sys.argv[1]
pairs = int(sys.argv[2]) if len(sys.argv) > 2 else 20_000
epochs = int(sys.argv[3]) if len(sys.argv) > 3 else 3

model, _ = load_model(ckpt)
detector, history = train_detector(
    model, pair_count=pairs, epochs=epochs, lr=1e-3, batch_size=64, seed=5,
    detector=KeypointDetector(model.config.num_keypoints, base_channels=24, depth=4),
    log=None,
)
print("holdout per epoch:", [round(h, 4) for h in history["holdout_error"]])
images, coords = collect_pairs(model, 1000, seed=777, batch_size=50)
with torch.no_grad():
    pred = torch.cat([detector(images[i : i + 100]) for i in range(0, 1000, 100)])
err = (pred - coords).norm(dim=-1).mean().item()
per_kp = (pred - coords).norm(dim=-1).mean(dim=0)
sigma = coords.std(dim=0).mean().item()
print(
    f"{ckpt}: err {err:.4f} per-kp {[round(v, 4) for v in per_kp.tolist()]} "
    f"std {sigma:.4f} ratio {err / sigma:.3f} (target < 0.25)"
)
