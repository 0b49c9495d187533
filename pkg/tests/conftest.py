import pytest
import torch

from kpgan.config import TrainConfig, smoke_config
from kpgan.data import SyntheticShapesSpec, make_synthetic_dataset
from kpgan.model import KeypointGanModel, ModelConfig


def tiny_train_config(**overrides) -> TrainConfig:
    base = dict(
        noise_dim=8,
        embed_dim=8,
        num_keypoints=2,
        tau=0.05,
        max_channels=8,
        units_per_level=1,
        start_resolution=8,
        final_resolution=16,
        rgb_start_resolution=8,
        adapt_steps=2,
        stable_steps=3,
        batch_size=4,
        checkpoint_interval=1000,
        seed=1,
    )
    base.update(overrides)
    return TrainConfig(**base)


def tiny_model_config(**overrides) -> ModelConfig:
    base = dict(
        noise_dim=8,
        embed_dim=8,
        num_keypoints=3,
        tau=0.05,
        final_resolution=16,
        rgb_start_resolution=8,
        max_channels=8,
        units_per_level=1,
    )
    base.update(overrides)
    return ModelConfig(**base)


@pytest.fixture
def tiny_model():
    torch.manual_seed(0)
    return KeypointGanModel(tiny_model_config())


@pytest.fixture(scope="session")
def shapes_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("shapes")
    make_synthetic_dataset(SyntheticShapesSpec(image_size=16), 12, seed=0, out_dir=out)
    return out


_SMOKE_DATA_VERSION = 5  # bump when SyntheticShapesSpec defaults change


@pytest.fixture(scope="session")
def smoke_run(tmp_path_factory):
    """The acceptance-scale trained model: 64x64, K=2, 1500 steps on 500
    synthetic images. Cached under .cache/ keyed by the config hash so the
    suite does not retrain on every invocation."""
    from pathlib import Path

    from kpgan.data import open_dataset
    from kpgan.trainer import Trainer

    config = smoke_config()
    key = f"smoke_v{_SMOKE_DATA_VERSION}_{config.config_hash()[:16]}"
    cache = Path(__file__).resolve().parent.parent / ".cache" / key
    data_dir = cache / "data"
    ckpt = cache / "final.kpck"
    if not ckpt.exists():
        import json

        cache.mkdir(parents=True, exist_ok=True)
        make_synthetic_dataset(SyntheticShapesSpec(image_size=64), 500, seed=7, out_dir=data_dir)
        dataset = open_dataset(data_dir, config.start_resolution)
        trainer = Trainer(config, dataset, cache / "run")
        trainer.train(log=None)
        trainer.save(ckpt)
        (cache / "history.json").write_text(json.dumps(trainer.history))
    return {"checkpoint": ckpt, "config": config, "data_dir": data_dir}
