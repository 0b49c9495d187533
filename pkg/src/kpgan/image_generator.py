"""Style-map-conditioned convolutional image generators.

The default generator grows a learned 4x4 constant up to the target
resolution, two SPADE+conv units per level, bilinear upsampling, 1x1 toRGB
heads from a configurable resolution upward, and progressive alpha blending
between the two finest RGB heads while a new resolution is being adapted.

The tuned variant trades the progressive machinery for keypoint-faithful
generation: a positional-encoded 32x32 starting tensor built from
grid-to-keypoint differences, a fixed pixel margin around every feature map
that is cropped back after each upsampling (so no generated pixel ever sees a
boundary condition), SPADE residual blocks, and a separate AdaIN-conditioned
background network merged through a predicted foreground mask.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .spatial_embedding import grid_coords


@dataclass(frozen=True)
class GeneratorVariant:
    """Architecture variant switches; see `default()` and `tuned()`."""

    name: str
    margin_px: int
    base_tensor: str
    background: str

    @classmethod
    def default(cls) -> "GeneratorVariant":
        return cls("default", 0, "learned_const_4x4", "inline")

    @classmethod
    def tuned(cls) -> "GeneratorVariant":
        return cls("tuned", 10, "positional_encoded_32x32", "separate_network_with_mask")

    @classmethod
    def from_name(cls, name: str) -> "GeneratorVariant":
        if name == "default":
            return cls.default()
        if name == "tuned":
            return cls.tuned()
        raise ValueError(f"unknown generator variant {name!r}")

    @property
    def base_resolution(self) -> int:
        return 32 if self.base_tensor == "positional_encoded_32x32" else 4


def channel_width(resolution: int, max_channels: int, halving_start: int = 64) -> int:
    """Per-level channel schedule: flat up to `halving_start`, halving after."""
    if resolution <= halving_start:
        return max_channels
    return max(max_channels * halving_start // resolution, 8)


def level_resolutions(base: int, final: int) -> list[int]:
    if final < base or final % base or (final // base) & (final // base - 1):
        raise ValueError(f"final resolution {final} must be base {base} times a power of 2")
    res, out = base, []
    while res <= final:
        out.append(res)
        res *= 2
    return out


def _init_conv(module: nn.Module, slope: float = 0.2):
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.Linear)):
            nn.init.kaiming_normal_(m.weight, a=slope, nonlinearity="leaky_relu")
            if m.bias is not None:
                nn.init.zeros_(m.bias)


def upsample2(x: torch.Tensor) -> torch.Tensor:
    return F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)


class SpadeNormalization(nn.Module):
    """Batch-normalize, then denormalize with gamma/beta maps convolved from
    the style map: out = gamma(S) * (F - mu_c) / sigma_c + beta(S)."""

    def __init__(self, feature_channels: int, style_channels: int, kernel_size: int = 3):
        super().__init__()
        pad = kernel_size // 2
        self.norm = nn.BatchNorm2d(feature_channels, affine=False)
        self.gamma = nn.Conv2d(style_channels, feature_channels, kernel_size, padding=pad)
        self.beta = nn.Conv2d(style_channels, feature_channels, kernel_size, padding=pad)
        _init_conv(self.gamma)
        _init_conv(self.beta)
        # start as identity denormalization
        nn.init.ones_(self.gamma.bias)

    def forward(self, feature: torch.Tensor, style: torch.Tensor) -> torch.Tensor:
        if feature.shape[-2:] != style.shape[-2:]:
            raise ValueError(
                f"feature {tuple(feature.shape[-2:])} and style {tuple(style.shape[-2:])} "
                "spatial dims must match"
            )
        return self.gamma(style) * self.norm(feature) + self.beta(style)


class SpadeUnit(nn.Module):
    """One keypoint-conditioned conv unit: SPADE -> leaky ReLU -> 3x3 conv."""

    def __init__(self, in_channels: int, out_channels: int, style_channels: int):
        super().__init__()
        self.spade = SpadeNormalization(in_channels, style_channels)
        self.conv = nn.Conv2d(in_channels, out_channels, 3, padding=1)
        _init_conv(self.conv)

    def forward(self, x: torch.Tensor, style: torch.Tensor) -> torch.Tensor:
        return self.conv(F.leaky_relu(self.spade(x, style), 0.2))


class SpadeResidualBlock(nn.Module):
    """SPADE residual block (tuned variant); shortcut conv when widths differ."""

    def __init__(self, in_channels: int, out_channels: int, style_channels: int):
        super().__init__()
        mid = min(in_channels, out_channels)
        self.spade_0 = SpadeNormalization(in_channels, style_channels)
        self.conv_0 = nn.Conv2d(in_channels, mid, 3, padding=1)
        self.spade_1 = SpadeNormalization(mid, style_channels)
        self.conv_1 = nn.Conv2d(mid, out_channels, 3, padding=1)
        self.learned_shortcut = in_channels != out_channels
        if self.learned_shortcut:
            self.spade_s = SpadeNormalization(in_channels, style_channels)
            self.conv_s = nn.Conv2d(in_channels, out_channels, 1, bias=False)
        _init_conv(self.conv_0)
        _init_conv(self.conv_1)
        if self.learned_shortcut:
            _init_conv(self.conv_s)

    def forward(self, x: torch.Tensor, style: torch.Tensor) -> torch.Tensor:
        dx = self.conv_0(F.leaky_relu(self.spade_0(x, style), 0.2))
        dx = self.conv_1(F.leaky_relu(self.spade_1(dx, style), 0.2))
        shortcut = self.conv_s(self.spade_s(x, style)) if self.learned_shortcut else x
        return shortcut + dx


class AdainNormalization(nn.Module):
    """Instance-normalize, denormalize per channel from a style vector."""

    def __init__(self, feature_channels: int, style_dim: int):
        super().__init__()
        self.norm = nn.InstanceNorm2d(feature_channels, affine=False)
        self.affine = nn.Linear(style_dim, 2 * feature_channels)
        _init_conv(self.affine)

    def forward(self, x: torch.Tensor, style: torch.Tensor) -> torch.Tensor:
        gamma, beta = self.affine(style).chunk(2, dim=-1)
        return (1 + gamma)[:, :, None, None] * self.norm(x) + beta[:, :, None, None]


class AdainResidualBlock(nn.Module):
    """Residual block mirroring SpadeResidualBlock with AdaIN conditioning."""

    def __init__(self, in_channels: int, out_channels: int, style_dim: int):
        super().__init__()
        mid = min(in_channels, out_channels)
        self.norm_0 = AdainNormalization(in_channels, style_dim)
        self.conv_0 = nn.Conv2d(in_channels, mid, 3, padding=1)
        self.norm_1 = AdainNormalization(mid, style_dim)
        self.conv_1 = nn.Conv2d(mid, out_channels, 3, padding=1)
        self.learned_shortcut = in_channels != out_channels
        if self.learned_shortcut:
            self.norm_s = AdainNormalization(in_channels, style_dim)
            self.conv_s = nn.Conv2d(in_channels, out_channels, 1, bias=False)
        _init_conv(self.conv_0)
        _init_conv(self.conv_1)
        if self.learned_shortcut:
            _init_conv(self.conv_s)

    def forward(self, x: torch.Tensor, style: torch.Tensor) -> torch.Tensor:
        dx = self.conv_0(F.leaky_relu(self.norm_0(x, style), 0.2))
        dx = self.conv_1(F.leaky_relu(self.norm_1(dx, style), 0.2))
        shortcut = self.conv_s(self.norm_s(x, style)) if self.learned_shortcut else x
        return shortcut + dx


class PositionalStart(nn.Module):
    """Starting tensor from grid-to-keypoint differences.

    M(p) = [sin(pi * Linear([p-k_1, ..., p-k_K])), cos(pi * Linear(...))];
    depending only on differences, it carries no absolute grid position.
    """

    def __init__(self, num_keypoints: int, out_channels: int):
        super().__init__()
        if out_channels % 2:
            raise ValueError("positional start needs an even channel count")
        self.linear = nn.Linear(2 * num_keypoints, out_channels // 2)
        _init_conv(self.linear)

    def forward(
        self, coords: torch.Tensor, resolution: tuple[int, int], margin: int = 0
    ) -> torch.Tensor:
        grid = grid_coords(resolution, margin, device=coords.device, dtype=coords.dtype)
        diff = grid[None, None] - coords[:, :, None, None, :]  # (N, K, H, W, 2)
        batch, num_kp, height, width, _ = diff.shape
        flat = diff.permute(0, 2, 3, 1, 4).reshape(batch, height, width, 2 * num_kp)
        proj = math.pi * self.linear(flat)
        enc = torch.cat([torch.sin(proj), torch.cos(proj)], dim=-1)
        return enc.permute(0, 3, 1, 2)


def blend_background(
    foreground: torch.Tensor, background: torch.Tensor, mask: torch.Tensor
) -> torch.Tensor:
    """Linear blend mask*fg + (1-mask)*bg; mask must already lie in [0, 1]."""
    if foreground.shape != background.shape:
        raise ValueError(f"foreground {tuple(foreground.shape)} != background {tuple(background.shape)}")
    if mask.dim() == foreground.dim() - 1:
        mask = mask.unsqueeze(-3)
    if mask.shape[-2:] != foreground.shape[-2:]:
        raise ValueError("mask spatial dims must match the images")
    if mask.min() < 0 or mask.max() > 1:
        raise ValueError("mask values must lie in [0, 1]")
    return mask * foreground + (1 - mask) * background


def crop_margin(x: torch.Tensor, margin: int) -> torch.Tensor:
    if margin == 0:
        return x
    return x[..., margin:-margin, margin:-margin]


class ImageGenerator(nn.Module):
    """Progressive SPADE generator (default variant)."""

    def __init__(
        self,
        style_channels: int,
        base_resolution: int = 4,
        final_resolution: int = 64,
        rgb_start_resolution: int = 64,
        max_channels: int = 512,
        units_per_level: int = 2,
    ):
        super().__init__()
        self.resolutions = level_resolutions(base_resolution, final_resolution)
        self.rgb_start_resolution = min(rgb_start_resolution, final_resolution)
        self.base_resolution = base_resolution
        self.final_resolution = final_resolution
        width = lambda r: channel_width(r, max_channels)
        self.start = nn.Parameter(torch.randn(width(base_resolution), base_resolution, base_resolution))
        self.levels = nn.ModuleDict()
        self.to_rgb = nn.ModuleDict()
        prev = base_resolution
        for res in self.resolutions:
            units = nn.ModuleList()
            in_ch = width(prev)
            for _ in range(units_per_level):
                units.append(SpadeUnit(in_ch, width(res), style_channels))
                in_ch = width(res)
            self.levels[str(res)] = units
            if res >= self.rgb_start_resolution:
                head = nn.Conv2d(width(res), 3, 1)
                _init_conv(head)
                self.to_rgb[str(res)] = head
            prev = res

    def forward(
        self,
        style_pyramid: list[torch.Tensor],
        resolution: int,
        alpha: float = 1.0,
    ) -> torch.Tensor:
        if resolution > self.final_resolution:
            raise RuntimeError(
                f"stage {resolution} beyond constructed resolution {self.final_resolution}"
            )
        if resolution < self.rgb_start_resolution:
            raise RuntimeError(f"no RGB head below resolution {self.rgb_start_resolution}")
        active_res = [r for r in self.resolutions if r <= resolution]
        if len(style_pyramid) != len(active_res):
            raise ValueError(
                f"expected {len(active_res)} style levels for stage {resolution}, "
                f"got {len(style_pyramid)}"
            )
        batch = style_pyramid[0].shape[0]
        x = self.start[None].expand(batch, -1, -1, -1)
        rgb_prev = None
        for i, res in enumerate(active_res):
            if i > 0:
                x = upsample2(x)
            for unit in self.levels[str(res)]:
                x = unit(x, style_pyramid[i])
            if alpha < 1.0 and res == resolution // 2 and str(res) in self.to_rgb:
                rgb_prev = self.to_rgb[str(res)](x)
        rgb = self.to_rgb[str(resolution)](x)
        if alpha < 1.0:
            if rgb_prev is None:
                raise RuntimeError(
                    f"adapting blend at stage {resolution} needs an RGB head at {resolution // 2}"
                )
            rgb = alpha * rgb + (1.0 - alpha) * upsample2(rgb_prev)
        return torch.tanh(rgb)


class TunedImageGenerator(nn.Module):
    """Keypoint-faithful variant: positional start, margins, residual blocks,
    separate AdaIN background network, mask blending, final 1x1 conv."""

    def __init__(
        self,
        style_channels: int,
        embed_dim: int,
        num_keypoints: int,
        base_resolution: int = 32,
        final_resolution: int = 64,
        margin: int = 10,
        max_channels: int = 512,
        units_per_level: int = 2,
    ):
        super().__init__()
        self.resolutions = level_resolutions(base_resolution, final_resolution)
        self.base_resolution = base_resolution
        self.final_resolution = final_resolution
        self.margin = margin
        width = lambda r: channel_width(r, max_channels)
        self.positional_start = PositionalStart(num_keypoints, width(base_resolution))
        self.bg_start = nn.Parameter(
            torch.randn(width(base_resolution), base_resolution + 2 * margin, base_resolution + 2 * margin)
        )
        self.fg_levels = nn.ModuleDict()
        self.bg_levels = nn.ModuleDict()
        prev = base_resolution
        for res in self.resolutions:
            fg_units, bg_units = nn.ModuleList(), nn.ModuleList()
            in_ch = width(prev)
            for _ in range(units_per_level):
                fg_units.append(SpadeResidualBlock(in_ch, width(res), style_channels))
                bg_units.append(AdainResidualBlock(in_ch, width(res), embed_dim))
                in_ch = width(res)
            self.fg_levels[str(res)] = fg_units
            self.bg_levels[str(res)] = bg_units
            prev = res
        out_ch = width(final_resolution)
        self.fg_rgb = nn.Conv2d(out_ch, 3, 1)
        self.bg_rgb = nn.Conv2d(out_ch, 3, 1)
        self.mask_head = nn.Conv2d(out_ch, 1, 1)
        self.final_rgb = nn.Conv2d(3, 3, 1)
        for head in (self.fg_rgb, self.bg_rgb, self.mask_head):
            _init_conv(head)
        # keep the final fusion near-identity at start
        nn.init.eye_(self.final_rgb.weight[:, :, 0, 0])
        nn.init.zeros_(self.final_rgb.bias)

    def forward(
        self,
        coords: torch.Tensor,
        style_pyramid: list[torch.Tensor],
        w_bg: torch.Tensor,
    ) -> dict[str, torch.Tensor]:
        if len(style_pyramid) != len(self.resolutions):
            raise ValueError(
                f"expected {len(self.resolutions)} style levels, got {len(style_pyramid)}"
            )
        batch = coords.shape[0]
        fg = self.positional_start(
            coords, (self.base_resolution, self.base_resolution), self.margin
        )
        bg = self.bg_start[None].expand(batch, -1, -1, -1)
        for i, res in enumerate(self.resolutions):
            if i > 0:
                fg = crop_margin(upsample2(fg), self.margin)
                bg = crop_margin(upsample2(bg), self.margin)
            for fg_unit, bg_unit in zip(self.fg_levels[str(res)], self.bg_levels[str(res)]):
                fg = fg_unit(fg, style_pyramid[i])
                bg = bg_unit(bg, w_bg)
        fg = crop_margin(fg, self.margin)
        bg = crop_margin(bg, self.margin)
        fg_rgb = self.fg_rgb(fg)
        bg_rgb = self.bg_rgb(bg)
        mask = torch.sigmoid(self.mask_head(fg))
        blended = blend_background(fg_rgb, bg_rgb, mask)
        image = torch.tanh(self.final_rgb(blended))
        return {
            "image": image,
            "foreground_rgb": fg_rgb,
            "background_rgb": bg_rgb,
            "mask": mask[:, 0],
        }
