"""Probe run: train the smoke config for N steps, dumping alignment metrics
and sample grids periodically. Usage: python scripts/probe_smoke.py [steps] [tag] [key=value ...]"""
import sys, time, json
from pathlib import Path

import torch

sys.path.insert(0, "src")
from kpgan.config import smoke_config
from kpgan.data import SyntheticShapesSpec, make_synthetic_dataset, open_dataset, save_image_png
from kpgan.evaluation import keypoint_object_alignment, keypoint_object_correlation, keypoint_spread
from kpgan.keypoint_generator import sample_latents
from kpgan.trainer import Trainer

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 300
tag = sys.argv[2] if len(sys.argv) > 2 else "probe"
overrides = {}
for arg in sys.argv[3:]:
    if "=" not in arg:
        continue  # flags like --detector-probe
    k, v = arg.split("=")
    overrides[k] = json.loads(v)

root = Path(".cache") / f"exp_{tag}"
root.mkdir(parents=True, exist_ok=True)
data_dir = Path(".cache/probe_data_v6")
if "--square-as-disc" in sys.argv:
    data_dir = Path(".cache/probe_data_discs")  # square_as_disc variant

if not (data_dir / "ground_truth.csv").exists():
    spec = SyntheticShapesSpec(image_size=64)
    if "--square-as-disc" in sys.argv:
        spec = SyntheticShapesSpec(image_size=64, square_shape="disc")
    make_synthetic_dataset(spec, 500, seed=7, out_dir=data_dir)

cfg = smoke_config(**overrides)
print("config:", {k: getattr(cfg, k) for k in ("tau", "lr_g", "lr_d", "kp_mlp_lr_scale", "lambda_bg", "batch_size", "max_channels", "embed_dim")})
tr = Trainer(cfg, open_dataset(data_dir, 64), root / "run")

t0 = time.time()
while tr.global_step < steps:
    rec = tr.train_step()
    if rec["step"] % 100 == 0:
        print(f"step {rec['step']}  L_G {rec['loss_g']:.3f}  L_D {rec['loss_d']:.3f}  gp {rec['loss_gp']:.3f}  bg {rec['loss_bg']:.4f}  ({time.time()-t0:.0f}s)")
    if (rec["step"] + 1) % 250 == 0 or rec["step"] + 1 == steps:
        rep = keypoint_object_alignment(tr.model, count=40, seed=1234)
        spread = keypoint_spread(tr.model, count=128)
        print(f"  step {rec['step']+1}: pass {rep.pass_fraction:.2f} detected {rep.detected_fraction:.2f} "
              f"mass {rep.mean_mass_fraction:.3f} area {rep.mean_area_fraction:.3f} kp_std {spread['pooled_std']:.3f}")
        print(f"  kp means: {spread['mean'].flatten().tolist()}")
        corr = keypoint_object_correlation(tr.model, count=120)
        print(f"  coupling: n {corr['n']} r_x {corr['r_x']:.3f} r_y {corr['r_y']:.3f}")
        tr.model.train()

tr.save(root / "probe.kpck")
tr.model.eval()
with torch.no_grad():
    sample = tr.model.generate(sample_latents(8, cfg.noise_dim, seed=42))
for i in range(8):
    save_image_png(sample.image[i], root / f"sample_{i}.png")
print("coords of sample 0:", sample.coords[0].tolist())
print("saved to", root)

# detector feasibility readout at the end of a probe
if "--detector-probe" in sys.argv:
    from kpgan.detection import KeypointDetector, collect_pairs, fit_detector
    images, coords = collect_pairs(tr.model, 3000, seed=5, batch_size=50)
    images_u8 = ((images + 1) * 127.5).round().clamp(0, 255).to(torch.uint8)
    det, hist = fit_detector(images_u8, coords, epochs=2, lr=1e-3, batch_size=64, seed=0,
                             detector=KeypointDetector(cfg.num_keypoints, base_channels=24, depth=4))
    test_imgs, test_coords = collect_pairs(tr.model, 400, seed=777, batch_size=50)
    with torch.no_grad():
        pred = det(test_imgs)
    err = (pred - test_coords).norm(dim=-1).mean().item()
    sigma = test_coords.std(dim=0).mean().item()
    print(f"detector probe: err {err:.4f} std {sigma:.4f} ratio {err/sigma:.3f} (target < 0.25)")
