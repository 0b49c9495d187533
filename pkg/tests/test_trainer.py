import hashlib
import json
import math

import pytest
import torch

import kpgan.trainer as trainer_mod
from kpgan.checkpoint import load_checkpoint, save_checkpoint
from kpgan.config import TrainConfig, read_config, smoke_config, write_config
from kpgan.data import open_dataset
from kpgan.trainer import (
    ProgressiveStage,
    Trainer,
    load_model,
    stage_at,
    stage_schedule,
    total_schedule_steps,
    update_alpha,
)

from conftest import tiny_train_config


@pytest.fixture
def dataset(shapes_dir):
    return open_dataset(shapes_dir, 8)


def make_trainer(dataset, tmp_path, **overrides) -> Trainer:
    return Trainer(tiny_train_config(**overrides), dataset, tmp_path / "run")


# -- config file format -------------------------------------------------------


def test_config_round_trip(tmp_path):
    cfg = tiny_train_config(batch_by_resolution={64: 12, 128: 6}, batch_size=None)
    path = tmp_path / "train.cfg"
    write_config(cfg, path)
    back = read_config(path)
    assert back == cfg


def test_config_rejects_unknown_keys(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("definitely_not_a_key = 3\n")
    with pytest.raises(ValueError, match="unknown config key"):
        read_config(path)


def test_config_parses_comments_and_batch_table(tmp_path):
    path = tmp_path / "ok.cfg"
    path.write_text(
        "# a comment\n"
        "lr_g = 0.0002  # inline comment\n"
        "batch_by_resolution = 64:32,128:16\n"
        "background_enabled = false\n"
    )
    cfg = read_config(path)
    assert cfg.lr_g == 2e-4
    assert cfg.batch_by_resolution == {64: 32, 128: 16}
    assert cfg.background_enabled is False


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(lr_g=0.0)
    with pytest.raises(ValueError):
        TrainConfig(lambda_gp=-1.0)
    cfg = TrainConfig(batch_by_resolution={"64": 128})
    assert cfg.batch_for(64) == 128
    with pytest.raises(ValueError):
        cfg.batch_for(1024)


# -- checkpoint archive -------------------------------------------------------


def test_checkpoint_save_load_save_bitwise(tmp_path):
    torch.manual_seed(0)
    tensors = {
        "b.weights": torch.randn(3, 4),
        "a.counts": torch.arange(5, dtype=torch.int64),
        "c.flags": torch.tensor([True, False]),
        "d.bytes": torch.randint(0, 255, (7,), dtype=torch.uint8),
    }
    manifest = {"step": 3, "config": {"x": 1.5}}
    p1, p2 = tmp_path / "one.kpck", tmp_path / "two.kpck"
    save_checkpoint(p1, manifest, tensors)
    loaded_manifest, loaded = load_checkpoint(p1)
    save_checkpoint(p2, loaded_manifest, loaded)
    assert p1.read_bytes() == p2.read_bytes()
    assert loaded_manifest == manifest
    for name, t in tensors.items():
        assert torch.equal(loaded[name], t)


def test_checkpoint_rejects_bad_magic(tmp_path):
    path = tmp_path / "junk.kpck"
    path.write_bytes(b"NOTMAGIC" + b"\x00" * 16)
    with pytest.raises(ValueError, match="magic"):
        load_checkpoint(path)


# -- progressive schedule -----------------------------------------------------


def test_update_alpha_ramp():
    stage = ProgressiveStage(128, "adapting", 0.0, 0, 0, 10)
    assert update_alpha(stage).alpha == 0.0
    stage = ProgressiveStage(128, "adapting", 0.0, 5, 5, 10)
    assert update_alpha(stage).alpha == 0.5
    stage = ProgressiveStage(128, "adapting", 0.0, 10, 10, 10)
    assert update_alpha(stage).alpha == 1.0
    with pytest.raises(RuntimeError):
        update_alpha(ProgressiveStage(128, "stable", 1.0, 0, 0, 10))


def test_schedule_single_stage_degenerates_to_plain_training():
    cfg = tiny_train_config(
        start_resolution=16, final_resolution=16, adapt_steps=0, stable_steps=7
    )
    assert stage_schedule(cfg) == [(16, "stable", 7)]
    stage = stage_at(cfg, 3)
    assert (stage.resolution, stage.phase, stage.alpha) == (16, "stable", 1.0)


def test_schedule_progression_and_first_stage_skips_adaptation():
    cfg = tiny_train_config(adapt_steps=2, stable_steps=3)
    assert stage_schedule(cfg) == [
        (8, "stable", 3),
        (16, "adapting", 2),
        (16, "stable", 3),
    ]
    assert total_schedule_steps(cfg) == 8
    assert stage_at(cfg, 0).phase == "stable"
    adapting = stage_at(cfg, 3)
    assert (adapting.resolution, adapting.phase, adapting.alpha) == (16, "adapting", 0.0)
    assert stage_at(cfg, 4).alpha == 0.5


def test_tuned_variant_uses_single_stage():
    cfg = tiny_train_config(
        variant="tuned", start_resolution=32, final_resolution=64,
        adapt_steps=5, stable_steps=5, max_channels=8,
    )
    assert stage_schedule(cfg) == [(64, "stable", 10)]


# -- training loop ------------------------------------------------------------


def param_digest(module) -> str:
    h = hashlib.sha256()
    for name, p in sorted(module.state_dict().items()):
        h.update(name.encode())
        h.update(p.detach().numpy().tobytes())
    return h.hexdigest()


def test_short_run_keeps_losses_finite(dataset, tmp_path):
    tr = make_trainer(dataset, tmp_path)
    for _ in range(6):
        record = tr.train_step()
        assert all(math.isfinite(v) for k, v in record.items() if k.startswith("loss"))
    assert tr.global_step == 6


def test_optimizer_separation(dataset, tmp_path):
    tr = make_trainer(dataset, tmp_path)
    g_before, d_before = param_digest(tr.model), param_digest(tr.disc)
    tr.train_step()
    # both optimizers ran; each changed only its own side
    assert param_digest(tr.model) != g_before
    assert param_digest(tr.disc) != d_before
    gen_params = {id(p) for p in tr.model.parameters()}
    disc_params = {id(p) for p in tr.disc.parameters()}
    assert gen_params.isdisjoint(disc_params)
    opt_g_ids = {id(p) for group in tr.opt_g.param_groups for p in group["params"]}
    opt_d_ids = {id(p) for group in tr.opt_d.param_groups for p in group["params"]}
    assert opt_g_ids == gen_params
    assert opt_d_ids == disc_params


def test_keypoint_generator_frozen_during_adapting(dataset, tmp_path):
    tr = make_trainer(dataset, tmp_path)
    tr.global_step = 3  # inside the 16x16 adapting phase (see schedule test)
    assert tr.current_stage().phase == "adapting"
    before = param_digest(tr.model.keypoint_generator)
    record = tr.train_step()
    assert record["phase"] == "adapting"
    assert param_digest(tr.model.keypoint_generator) == before
    assert tr.opt_g.param_groups[0]["lr"] == 0.0
    # and it moves again in the stable phase
    tr.global_step = 6
    record = tr.train_step()
    assert record["phase"] == "stable"
    assert param_digest(tr.model.keypoint_generator) != before


def test_r1_sees_only_real_batches(dataset, tmp_path, monkeypatch):
    captured = []
    original = trainer_mod.r1_gradient_penalty

    def spy(images, critic):
        captured.append(images.detach().clone())
        return original(images, critic)

    monkeypatch.setattr(trainer_mod, "r1_gradient_penalty", spy)
    tr = make_trainer(dataset, tmp_path)
    from kpgan.data import load_batch
    from kpgan.rng import make_generator

    probe = make_generator(tiny_train_config().seed * 3 + 2)
    expected_reals = load_batch(tr.dataset, 4, probe)
    tr.train_step()
    assert len(captured) == 1
    assert torch.equal(captured[0], expected_reals)


def test_non_finite_loss_aborts_with_dump(dataset, tmp_path):
    tr = make_trainer(dataset, tmp_path)
    with torch.no_grad():
        tr.disc.score.weight.fill_(float("nan"))
    with pytest.raises(RuntimeError, match="non-finite"):
        tr.train_step()
    dump = json.loads((tmp_path / "run" / "divergence_dump.json").read_text())
    assert "parameter_norms" in dump and "record" in dump


def test_resume_reproduces_losses_bitwise(dataset, tmp_path):
    tr = make_trainer(dataset, tmp_path)
    for _ in range(3):
        tr.train_step()
    ckpt = tr.save(tmp_path / "mid.kpck")
    after = [tr.train_step() for _ in range(2)]

    tr2 = Trainer(tiny_train_config(), dataset, tmp_path / "run2")
    tr2.load(ckpt)
    assert tr2.global_step == 3
    resumed = [tr2.train_step() for _ in range(2)]
    for a, b in zip(after, resumed):
        assert a == b


def test_checkpoint_stream_and_model_reload(dataset, tmp_path):
    cfg = tiny_train_config(checkpoint_interval=2, adapt_steps=0, stable_steps=4,
                            start_resolution=16, final_resolution=16)
    tr = Trainer(cfg, dataset, tmp_path / "run")
    paths = tr.train(log=None)
    assert [p.name for p in paths] == ["ckpt_00000002.kpck", "ckpt_00000004.kpck"]
    model, manifest = load_model(paths[-1])
    assert manifest["step"] == 4
    assert manifest["config_hash"] == cfg.config_hash()
    assert not model.training
    from kpgan.keypoint_generator import sample_latents

    sample = model.generate(sample_latents(1, cfg.noise_dim, seed=0))
    assert sample.image.shape == (1, 3, 16, 16)


def test_trained_state_rendering_consistency(dataset, tmp_path):
    # a reloaded checkpoint renders bitwise identically to the trainer's model
    tr = make_trainer(dataset, tmp_path)
    for _ in range(2):
        tr.train_step()
    path = tr.save(tmp_path / "state.kpck")
    model, _ = load_model(path)
    from kpgan.keypoint_generator import sample_latents

    latents = sample_latents(2, tr.config.noise_dim, seed=5)
    tr.model.eval()
    with torch.no_grad():
        a = tr.model.generate(latents, 8).image
        b = model.generate(latents, 8).image
    assert torch.equal(a, b)
