"""Composition root: latent triple -> keypoints -> style maps -> image."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .editing import SceneState
from .image_generator import (
    GeneratorVariant,
    ImageGenerator,
    TunedImageGenerator,
)
from .keypoint_generator import (
    EmbeddingMode,
    EmbeddingSet,
    KeypointGenerator,
    LatentTriple,
)
from .spatial_embedding import build_style_pyramid, render_heatmaps, style_channels


@dataclass
class ModelConfig:
    noise_dim: int = 256
    embed_dim: int = 128
    num_keypoints: int = 10
    tau: float = 0.01
    embedding_mode: str = "multiplicative"
    variant: str = "default"
    final_resolution: int = 64
    rgb_start_resolution: int = 64
    max_channels: int = 512
    units_per_level: int = 2
    background_enabled: bool = True
    contrastive_temperature: float = 0.1
    kp_head_init_scale: float = 0.05
    kp_head_calibration_std: float | None = None

    @property
    def mode(self) -> EmbeddingMode:
        return EmbeddingMode(self.embedding_mode)

    @property
    def generator_variant(self) -> GeneratorVariant:
        return GeneratorVariant.from_name(self.variant)


@dataclass
class GeneratedSample:
    """One rendered batch plus the conditioning that produced it."""

    image: torch.Tensor  # (N, 3, R, R) in [-1, 1]
    coords: torch.Tensor  # (N, K, 2)
    heatmaps: torch.Tensor  # (N, K+1, R, R) at output resolution, no margin
    foreground_mask: torch.Tensor | None = None  # (N, R, R), tuned variant only
    embeddings: EmbeddingSet | None = None


class KeypointGanModel(nn.Module):
    """Keypoint generator plus image generator behind one `generate` call."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        mode = config.mode
        self.keypoint_generator = KeypointGenerator(
            config.noise_dim,
            config.embed_dim,
            config.num_keypoints,
            mode,
            head_init_scale=config.kp_head_init_scale,
            head_calibration_std=config.kp_head_calibration_std,
        )
        s_channels = style_channels(config.num_keypoints, config.embed_dim, mode)
        variant = config.generator_variant
        if variant.name == "default":
            self.image_generator = ImageGenerator(
                s_channels,
                base_resolution=variant.base_resolution,
                final_resolution=config.final_resolution,
                rgb_start_resolution=config.rgb_start_resolution,
                max_channels=config.max_channels,
                units_per_level=config.units_per_level,
            )
        else:
            self.image_generator = TunedImageGenerator(
                s_channels,
                config.embed_dim,
                config.num_keypoints,
                base_resolution=variant.base_resolution,
                final_resolution=config.final_resolution,
                margin=variant.margin_px,
                max_channels=config.max_channels,
                units_per_level=config.units_per_level,
            )
        self.variant = variant

    @property
    def is_tuned(self) -> bool:
        return self.variant.name == "tuned"

    def style_resolutions(self, resolution: int) -> list[tuple[int, int]]:
        return [(r, r) for r in self.image_generator.resolutions if r <= resolution]

    def _render(
        self,
        coords: torch.Tensor,
        active: torch.Tensor | None,
        emb: EmbeddingSet,
        resolution: int,
        alpha: float,
    ) -> GeneratedSample:
        cfg = self.config
        margin = self.variant.margin_px
        pyramid = build_style_pyramid(
            self.style_resolutions(resolution),
            coords,
            active,
            emb,
            cfg.tau,
            margin=margin,
            mode=cfg.mode,
            background_enabled=cfg.background_enabled,
        )
        if self.is_tuned:
            out = self.image_generator(coords, pyramid, emb.w_bg)
            image, mask = out["image"], out["mask"]
        else:
            image = self.image_generator(pyramid, resolution, alpha)
            mask = None
        heatmaps = render_heatmaps(coords, active, cfg.tau, (resolution, resolution))
        return GeneratedSample(
            image=image,
            coords=coords,
            heatmaps=heatmaps,
            foreground_mask=mask,
            embeddings=emb,
        )

    def generate(
        self,
        latents: LatentTriple,
        resolution: int | None = None,
        alpha: float = 1.0,
    ) -> GeneratedSample:
        resolution = resolution or self.config.final_resolution
        if self.is_tuned and resolution != self.config.final_resolution:
            raise RuntimeError("the tuned variant renders at its final resolution only")
        coords, emb = self.keypoint_generator(latents)
        return self._render(coords, None, emb, resolution, alpha)

    def scene_from_latents(self, latents: LatentTriple) -> SceneState:
        """Editable state for a single latent triple (batch of one)."""
        if latents.batch_size != 1:
            raise ValueError("scene extraction expects a batch of one")
        coords, emb = self.keypoint_generator(latents)
        k = self.config.num_keypoints
        if emb.w_per_kp is not None:
            w_per_kp = emb.w_per_kp[0].detach().double().numpy()
        else:
            w_per_kp = np.zeros((k, 0))
        return SceneState(
            coords=coords[0].detach().double().numpy(),
            active=np.ones(k, dtype=bool),
            w_per_kp=w_per_kp,
            w_bg=emb.w_bg[0].detach().double().numpy(),
            w_global=None
            if emb.w_global is None
            else emb.w_global[0].detach().double().numpy(),
        )

    def render_scene(
        self, scene: SceneState, resolution: int | None = None, alpha: float = 1.0
    ) -> GeneratedSample:
        resolution = resolution or self.config.final_resolution
        cfg = self.config
        device = next(self.parameters()).device
        dtype = next(self.parameters()).dtype
        coords = torch.as_tensor(scene.coords, dtype=dtype, device=device)[None]
        active = torch.as_tensor(scene.active, device=device)
        w_bg = torch.as_tensor(scene.w_bg, dtype=dtype, device=device)[None]
        plain = scene.k == cfg.num_keypoints and np.array_equal(
            scene.slots, np.arange(scene.k)
        )
        if plain:
            if scene.w_per_kp.shape[1]:
                w_per_kp = torch.as_tensor(scene.w_per_kp, dtype=dtype, device=device)[None]
            else:
                w_per_kp = None
            emb = EmbeddingSet(w_global=None, w_const=None, w_bg=w_bg, w_per_kp=w_per_kp)
            return self._render(coords, active, emb, resolution, alpha)
        # enlarged or re-slotted scene: fold parts into training-time channels
        if scene.slots.max(initial=0) >= cfg.num_keypoints:
            raise ValueError(
                f"scene slot {int(scene.slots.max())} exceeds the model's {cfg.num_keypoints} channels"
            )
        margin = self.variant.margin_px
        pyramid = [
            self._folded_style_map(scene, res, margin, w_bg, device, dtype)
            for res in self.style_resolutions(resolution)
        ]
        if self.is_tuned:
            rep = self._slot_representative_coords(scene, device, dtype)
            out = self.image_generator(rep, pyramid, w_bg)
            image, mask = out["image"], out["mask"]
        else:
            image = self.image_generator(pyramid, resolution, alpha)
            mask = None
        heatmaps = render_heatmaps(coords, active, cfg.tau, (resolution, resolution))
        return GeneratedSample(
            image=image, coords=coords, heatmaps=heatmaps, foreground_mask=mask
        )

    def _folded_style_map(self, scene, res, margin, w_bg, device, dtype):
        """Style map with each part rendered into its assigned channel slot.

        Where several parts share a slot the strongest bump wins pixelwise,
        so a part duplicated in place renders identically to the original.
        """
        cfg = self.config
        coords = torch.as_tensor(scene.coords, dtype=dtype, device=device)[None]
        active = torch.as_tensor(scene.active, device=device)
        stack = render_heatmaps(coords, active, cfg.tau, res, margin)
        part_maps, bg_map = stack[0, :-1], stack[0, -1]
        if not cfg.background_enabled:
            bg_map = torch.zeros_like(bg_map)
        height, width = part_maps.shape[-2:]
        embed_dim = scene.w_per_kp.shape[1]
        w_parts = torch.as_tensor(scene.w_per_kp, dtype=dtype, device=device)
        blocks = []
        for j in range(cfg.num_keypoints):
            members = np.flatnonzero(scene.slots == j)
            if members.size == 0:
                heat = torch.zeros(height, width, device=device, dtype=dtype)
                chosen = None
            elif members.size == 1:
                heat = part_maps[members[0]]
                chosen = w_parts[members[0]][:, None, None] if embed_dim else None
            else:
                sub = part_maps[list(members)]
                heat, idx = sub.max(dim=0)
                if embed_dim:
                    chosen = w_parts[list(members)][idx].permute(2, 0, 1)
                else:
                    chosen = None
            if cfg.mode == EmbeddingMode.NONE:
                blocks.append(heat[None])
            elif chosen is None:
                blocks.append(torch.zeros(embed_dim, height, width, device=device, dtype=dtype))
            else:
                blocks.append(heat[None] * chosen)
        blocks.append(bg_map[None] * w_bg[0][:, None, None])
        return torch.cat(blocks, dim=0)[None]

    def _slot_representative_coords(self, scene, device, dtype):
        """One coordinate per training slot for the tuned positional start."""
        cfg = self.config
        rep = np.zeros((cfg.num_keypoints, 2))
        for j in range(cfg.num_keypoints):
            members = np.flatnonzero(scene.slots == j)
            rep[j] = scene.coords[members[0]] if members.size else 0.0
        return torch.as_tensor(rep, dtype=dtype, device=device)[None]

    def generator_parameters(self):
        """All generator-side parameters (keypoint generator included)."""
        return self.parameters()
