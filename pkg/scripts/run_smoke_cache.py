"""Train the acceptance smoke model into the test cache (same key as conftest).

Running this ahead of `pytest` makes the heavy acceptance tests reuse the
cached checkpoint instead of training inside the suite.
"""
import json
import sys
from pathlib import Path

sys.path.insert(0, "src")
sys.path.insert(0, "tests")
from conftest import _SMOKE_DATA_VERSION
from kpgan.config import smoke_config
from kpgan.data import SyntheticShapesSpec, make_synthetic_dataset, open_dataset
from kpgan.evaluation import keypoint_object_alignment, keypoint_spread
from kpgan.trainer import Trainer, load_model

config = smoke_config()
key = f"smoke_v{_SMOKE_DATA_VERSION}_{config.config_hash()[:16]}"
cache = Path(".cache") / key
data_dir = cache / "data"
ckpt = cache / "final.kpck"
if ckpt.exists():
    print("already cached at", ckpt)
else:
    cache.mkdir(parents=True, exist_ok=True)
    make_synthetic_dataset(SyntheticShapesSpec(image_size=64), 500, seed=7, out_dir=data_dir)
    trainer = Trainer(config, open_dataset(data_dir, config.start_resolution), cache / "run")
    trainer.train(log=print)
    trainer.save(ckpt)
    (cache / "history.json").write_text(json.dumps(trainer.history))
    print("saved", ckpt)

model, _ = load_model(ckpt)
report = keypoint_object_alignment(model, count=100, seed=1234)
spread = keypoint_spread(model)
print(f"alignment: pass {report.pass_fraction:.2f} detected {report.detected_fraction:.2f} "
      f"mass {report.mean_mass_fraction:.3f} area {report.mean_area_fraction:.3f}")
print(f"kp pooled std {spread['pooled_std']:.4f}  means {spread['mean'].flatten().tolist()}")
