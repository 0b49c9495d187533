"""Progressive convolutional critic.

Per resolution level: a 4x4 stride-2 conv to halve the feature map, then a
3x3 stride-1 conv, leaky ReLU after both. The stack bottoms out at 4x4 and a
single linear layer produces one unbounded score per sample. During an
adapting period the input image itself is blended with its down-up-sampled
self, so the critic always consumes a single image at the stage resolution.
No normalization layers anywhere.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

from .image_generator import channel_width, level_resolutions, _init_conv


class Discriminator(nn.Module):
    def __init__(
        self,
        final_resolution: int = 64,
        min_input_resolution: int = 64,
        max_channels: int = 512,
        bottom_resolution: int = 4,
    ):
        super().__init__()
        self.bottom_resolution = bottom_resolution
        self.input_resolutions = [
            r
            for r in level_resolutions(bottom_resolution, final_resolution)
            if min(min_input_resolution, final_resolution) <= r
        ]
        width = lambda r: channel_width(r, max_channels)
        self.from_rgb = nn.ModuleDict()
        for res in self.input_resolutions:
            conv = nn.Conv2d(3, width(res), 1)
            _init_conv(conv)
            self.from_rgb[str(res)] = conv
        self.blocks = nn.ModuleDict()
        res = final_resolution
        while res > bottom_resolution:
            down = nn.Conv2d(width(res), width(res // 2), 4, stride=2, padding=1)
            extract = nn.Conv2d(width(res // 2), width(res // 2), 3, padding=1)
            _init_conv(down)
            _init_conv(extract)
            self.blocks[str(res)] = nn.ModuleList([down, extract])
            res //= 2
        self.score = nn.Linear(width(bottom_resolution) * bottom_resolution**2, 1)
        _init_conv(self.score)

    def forward(
        self, images: torch.Tensor, resolution: int | None = None, alpha: float = 1.0
    ) -> torch.Tensor:
        resolution = resolution or images.shape[-1]
        if images.shape[-1] != resolution or images.shape[-2] != resolution:
            raise ValueError(
                f"images are {tuple(images.shape[-2:])} but stage resolution is {resolution}"
            )
        if str(resolution) not in self.from_rgb:
            raise ValueError(f"no input head for resolution {resolution}")
        if alpha < 1.0:
            coarse = F.interpolate(images, scale_factor=0.5, mode="bilinear", align_corners=False)
            coarse = F.interpolate(coarse, scale_factor=2, mode="bilinear", align_corners=False)
            images = alpha * images + (1.0 - alpha) * coarse
        x = F.leaky_relu(self.from_rgb[str(resolution)](images), 0.2)
        res = resolution
        while res > self.bottom_resolution:
            down, extract = self.blocks[str(res)]
            x = F.leaky_relu(down(x), 0.2)
            x = F.leaky_relu(extract(x), 0.2)
            res //= 2
        return self.score(x.flatten(1)).squeeze(-1)
