"""Progressive adversarial training.

Each resolution stage splits into an adapting period, where the blend
coefficient alpha ramps linearly from 0 to 1 and the keypoint generator's
learning rate is held at zero, and a stable period at alpha 1 with the
keypoint generator back at its scheduled rate. Critic and generator alternate
1:1; the learning rates already asymmetrize the two. The first stage and the
tuned variant (which drops progressive growth entirely) train stable-only.

All randomness flows through two seeded generators, one for latents and one
for data sampling, whose states ride along in checkpoints so a resumed run
reproduces the original step-for-step on CPU.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import torch

from .checkpoint import load_checkpoint, save_checkpoint
from .config import TrainConfig
from .data import DatasetHandle, load_batch
from .discriminator import Discriminator
from .keypoint_generator import EmbeddingMode, LatentTriple, sample_latents
from .losses import (
    background_loss,
    contrastive_embedding_loss,
    discriminator_gan_loss,
    generator_gan_loss,
    r1_gradient_penalty,
    total_losses,
)
from .model import KeypointGanModel
from .rng import make_generator


@dataclass
class ProgressiveStage:
    resolution: int
    phase: str  # "adapting" | "stable"
    alpha: float
    step: int  # global step
    step_in_phase: int
    adapt_steps: int


def update_alpha(stage: ProgressiveStage) -> ProgressiveStage:
    """Linear 0 -> 1 ramp across the adapting phase; clamped."""
    if stage.phase != "adapting":
        raise RuntimeError("alpha only ramps during an adapting phase")
    alpha = min(max(stage.step_in_phase / max(stage.adapt_steps, 1), 0.0), 1.0)
    return ProgressiveStage(
        stage.resolution, stage.phase, alpha, stage.step, stage.step_in_phase, stage.adapt_steps
    )


def stage_schedule(config: TrainConfig) -> list[tuple[int, str, int]]:
    """(resolution, phase, length) triples covering the whole run."""
    if config.variant == "tuned":
        return [(config.final_resolution, "stable", config.adapt_steps + config.stable_steps)]
    resolutions = []
    res = config.start_resolution
    while res <= config.final_resolution:
        resolutions.append(res)
        res *= 2
    phases = []
    for i, res in enumerate(resolutions):
        if i > 0 and config.adapt_steps > 0:
            phases.append((res, "adapting", config.adapt_steps))
        if config.stable_steps > 0:
            phases.append((res, "stable", config.stable_steps))
    return phases


def stage_at(config: TrainConfig, global_step: int) -> ProgressiveStage:
    offset = 0
    phases = stage_schedule(config)
    for res, phase, length in phases:
        if global_step < offset + length:
            stage = ProgressiveStage(
                res, phase, 1.0, global_step, global_step - offset, config.adapt_steps
            )
            return update_alpha(stage) if phase == "adapting" else stage
        offset += length
    res, phase, _ = phases[-1]
    return ProgressiveStage(res, "stable", 1.0, global_step, global_step - offset, config.adapt_steps)


def total_schedule_steps(config: TrainConfig) -> int:
    return sum(length for _, _, length in stage_schedule(config))


class Trainer:
    def __init__(
        self,
        config: TrainConfig,
        dataset: DatasetHandle,
        out_dir,
        deterministic: bool = False,
        device: str = "cpu",
    ):
        self.config = config
        self.dataset = dataset
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.device = device
        self.deterministic = deterministic
        if deterministic:
            torch.use_deterministic_algorithms(True)

        torch.manual_seed(config.seed)
        self.model = KeypointGanModel(config.model_config()).to(device)
        self.disc = Discriminator(
            final_resolution=config.final_resolution,
            min_input_resolution=min(config.start_resolution, config.final_resolution),
            max_channels=config.max_channels,
        ).to(device)
        self.opt_g = torch.optim.Adam(
            [
                {"params": list(self.model.keypoint_generator.parameters()), "lr": 0.0},
                {"params": list(self.model.image_generator.parameters()), "lr": config.lr_g},
            ],
            betas=(config.adam_beta1, config.adam_beta2),
        )
        self.opt_d = torch.optim.Adam(
            self.disc.parameters(), lr=config.lr_d, betas=(config.adam_beta1, config.adam_beta2)
        )
        self.g_latent = make_generator(config.seed * 3 + 1, device)
        self.g_data = make_generator(config.seed * 3 + 2, device)
        self.global_step = 0
        self.history: list[dict] = []

    # -- schedule ----------------------------------------------------------

    def current_stage(self) -> ProgressiveStage:
        return stage_at(self.config, self.global_step)

    def _apply_kp_lr(self, stage: ProgressiveStage):
        scale = 0.0 if stage.phase == "adapting" else self.config.kp_mlp_lr_scale
        self.opt_g.param_groups[0]["lr"] = scale * self.config.lr_g

    # -- single step -------------------------------------------------------

    def _sample_latents(self, count: int) -> LatentTriple:
        return sample_latents(count, self.config.noise_dim, generator=self.g_latent)

    def train_step(self) -> dict:
        cfg = self.config
        stage = self.current_stage()
        self._apply_kp_lr(stage)
        res, alpha = stage.resolution, stage.alpha
        batch = cfg.batch_for(res)
        self.dataset.resolution = res
        self.model.train()
        self.disc.train()

        reals = load_batch(self.dataset, batch, self.g_data).to(self.device)

        # critic update
        latents = self._sample_latents(batch)
        with torch.no_grad():
            fakes = self.model.generate(latents, res, alpha).image
        d_fake = self.disc(fakes, res, alpha)
        d_real = self.disc(reals, res, alpha)
        d_gan = discriminator_gan_loss(d_fake, d_real)
        r1 = r1_gradient_penalty(reals, lambda x: self.disc(x, res, alpha))
        zero = torch.zeros((), device=self.device)
        loss_d, _ = total_losses(d_gan, zero, r1, zero, cfg.lambda_gp, 0.0)
        self.opt_d.zero_grad(set_to_none=True)
        loss_d.backward()
        self.opt_d.step()

        # generator update; with the background penalty active the batch is
        # doubled: two background noises per (pose, appearance) draw
        lambda_bg = cfg.lambda_bg
        if self.global_step < cfg.lambda_bg_warmup_steps:
            lambda_bg = cfg.lambda_bg_warmup_value
        use_bg = cfg.background_enabled and cfg.lambda_bg > 0
        if use_bg:
            pair = self._sample_latents(batch)
            extra_bg = torch.randn(
                batch, cfg.noise_dim, generator=self.g_latent, device=self.device
            )
            latents_g = LatentTriple(
                pose=torch.cat([pair.pose, pair.pose]),
                appearance=torch.cat([pair.appearance, pair.appearance]),
                background=torch.cat([pair.background, extra_bg]),
            )
        else:
            latents_g = self._sample_latents(batch)
        sample = self.model.generate(latents_g, res, alpha)
        g_scores = self.disc(sample.image, res, alpha)
        g_gan = generator_gan_loss(g_scores)
        if use_bg:
            bg_maps = sample.heatmaps[:, -1]
            bg_pen = background_loss(
                sample.image[:batch],
                sample.image[batch:],
                bg_maps[:batch],
                bg_maps[batch:],
                norm=cfg.bg_loss_norm,
            )
        else:
            bg_pen = torch.zeros((), device=self.device)
        contrastive = None
        if self.model.config.mode == EmbeddingMode.CONTRASTIVE:
            contrastive = contrastive_embedding_loss(
                sample.embeddings.w_per_kp, cfg.contrastive_temperature
            )
        _, loss_g = total_losses(
            zero,
            g_gan,
            zero,
            bg_pen,
            0.0,
            lambda_bg if use_bg else 0.0,
            contrastive=contrastive,
            lambda_contrastive=cfg.lambda_contrastive,
        )
        self.opt_g.zero_grad(set_to_none=True)
        loss_g.backward()
        self.opt_g.step()

        record = {
            "step": self.global_step,
            "resolution": res,
            "phase": stage.phase,
            "alpha": alpha,
            "loss_g": float(loss_g.detach()),
            "loss_d": float(loss_d.detach()),
            "loss_gp": float(r1.detach()),
            "loss_bg": float(bg_pen.detach()),
        }
        if not all(math.isfinite(v) for k, v in record.items() if k.startswith("loss")):
            self._dump_divergence(record)
            raise RuntimeError(
                f"non-finite loss at step {self.global_step}; "
                f"diagnostics in {self.out_dir / 'divergence_dump.json'}"
            )
        self.global_step += 1
        return record

    def _dump_divergence(self, record: dict):
        norms = {
            f"model.{n}": float(p.detach().norm())
            for n, p in self.model.named_parameters()
        }
        norms.update(
            {f"disc.{n}": float(p.detach().norm()) for n, p in self.disc.named_parameters()}
        )
        with open(self.out_dir / "divergence_dump.json", "w") as fh:
            json.dump({"record": record, "parameter_norms": norms}, fh, indent=2)

    # -- loop --------------------------------------------------------------

    def train(self, max_steps: int | None = None, log=print) -> list[Path]:
        """Run the schedule (or `max_steps` of it); returns checkpoint paths."""
        cfg = self.config
        target = total_schedule_steps(cfg)
        if max_steps is not None:
            target = min(target, self.global_step + max_steps)
        paths = []
        while self.global_step < target:
            record = self.train_step()
            self.history.append(record)
            if record["step"] % cfg.log_interval == 0 and log is not None:
                log(
                    f"step {record['step']} stage {record['resolution']}/{record['phase']} "
                    f"L_G {record['loss_g']:.4f} L_D {record['loss_d']:.4f} "
                    f"L_gp {record['loss_gp']:.4f} L_bg {record['loss_bg']:.4f}"
                )
            if self.global_step % cfg.checkpoint_interval == 0 or self.global_step == target:
                path = self.out_dir / f"ckpt_{self.global_step:08d}.kpck"
                self.save(path)
                paths.append(path)
        return paths

    # -- persistence -------------------------------------------------------

    def _optimizer_tensors(self, opt, prefix: str, tensors: dict, scalars: dict):
        state = opt.state_dict()
        for idx, entry in state["state"].items():
            for key, value in entry.items():
                if isinstance(value, torch.Tensor):
                    tensors[f"{prefix}.state.{idx}.{key}"] = value
                else:
                    scalars.setdefault(prefix, {})[f"{idx}.{key}"] = value

    def save(self, path) -> Path:
        stage = self.current_stage()
        tensors: dict[str, torch.Tensor] = {}
        for name, t in self.model.state_dict().items():
            tensors[f"model.{name}"] = t
        for name, t in self.disc.state_dict().items():
            tensors[f"disc.{name}"] = t
        scalars: dict = {}
        self._optimizer_tensors(self.opt_g, "opt_g", tensors, scalars)
        self._optimizer_tensors(self.opt_d, "opt_d", tensors, scalars)
        tensors["rng.latent"] = self.g_latent.get_state()
        tensors["rng.data"] = self.g_data.get_state()
        manifest = {
            "format_version": 1,
            "torch_version": torch.__version__,
            "config": json.loads(self.config.canonical_json()),
            "config_hash": self.config.config_hash(),
            "step": self.global_step,
            "stage": {
                "resolution": stage.resolution,
                "phase": stage.phase,
                "alpha": stage.alpha,
                "step_in_phase": stage.step_in_phase,
            },
            "optimizer_scalars": scalars,
        }
        save_checkpoint(path, manifest, tensors)
        return Path(path)

    def _load_optimizer(self, opt, prefix: str, tensors: dict, scalars: dict):
        fresh = opt.state_dict()
        state: dict[int, dict] = {}
        for name, tensor in tensors.items():
            if not name.startswith(f"{prefix}.state."):
                continue
            _, _, idx, key = name.split(".", 3)
            state.setdefault(int(idx), {})[key] = tensor
        for combined, value in scalars.get(prefix, {}).items():
            idx, key = combined.split(".", 1)
            state.setdefault(int(idx), {})[key] = value
        opt.load_state_dict({"state": state, "param_groups": fresh["param_groups"]})

    def load(self, path):
        manifest, tensors = load_checkpoint(path)
        model_sd = {
            name[len("model.") :]: t for name, t in tensors.items() if name.startswith("model.")
        }
        disc_sd = {
            name[len("disc.") :]: t for name, t in tensors.items() if name.startswith("disc.")
        }
        self.model.load_state_dict(model_sd)
        self.disc.load_state_dict(disc_sd)
        scalars = manifest.get("optimizer_scalars", {})
        self._load_optimizer(self.opt_g, "opt_g", tensors, scalars)
        self._load_optimizer(self.opt_d, "opt_d", tensors, scalars)
        self.g_latent.set_state(tensors["rng.latent"])
        self.g_data.set_state(tensors["rng.data"])
        self.global_step = manifest["step"]
        return manifest


def load_model(path, device: str = "cpu") -> tuple[KeypointGanModel, dict]:
    """Load just the generator stack from a checkpoint, in eval mode."""
    manifest, tensors = load_checkpoint(path)
    config = TrainConfig(**manifest["config"])
    model = KeypointGanModel(config.model_config()).to(device)
    model_sd = {
        name[len("model.") :]: t for name, t in tensors.items() if name.startswith("model.")
    }
    model.load_state_dict(model_sd)
    model.eval()
    return model, manifest
