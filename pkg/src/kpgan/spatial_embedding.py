"""Keypoints to dense conditioning maps.

Each keypoint is rendered as an isotropic Gaussian bump
``H_j(p) = exp(-||p - k_j||^2 / tau)`` over a grid of pixel centers mapped
affinely into [-1, 1]^2, plus a background map defined as the pointwise
complement of the strongest keypoint response. Style maps broadcast each
keypoint's embedding across its bump; concatenated per resolution they form
the conditioning pyramid the image generator consumes.

Coordinate convention (used across the whole package): coordinates are
(x, y) with x along width and y along height; the pixel at row i, column j
has normalized center ((2j+1)/W - 1, (2i+1)/H - 1). A nonzero `margin`
extends the grid beyond [-1, 1] by that many pixels on every side without
moving the interior pixel centers.
"""

from __future__ import annotations

import torch

from .keypoint_generator import EmbeddingMode, EmbeddingSet


def grid_coords(
    resolution: tuple[int, int],
    margin: int = 0,
    device=None,
    dtype: torch.dtype = torch.float32,
) -> torch.Tensor:
    """Normalized (x, y) centers for an H x W grid, shape (H+2m, W+2m, 2)."""
    height, width = resolution
    if height < 1 or width < 1:
        raise ValueError(f"resolution must be positive, got {resolution}")
    ys = (2.0 * (torch.arange(height + 2 * margin, device=device, dtype=dtype) - margin) + 1.0) / height - 1.0
    xs = (2.0 * (torch.arange(width + 2 * margin, device=device, dtype=dtype) - margin) + 1.0) / width - 1.0
    grid_y, grid_x = torch.meshgrid(ys, xs, indexing="ij")
    return torch.stack([grid_x, grid_y], dim=-1)


def render_heatmaps(
    coords: torch.Tensor,
    active: torch.Tensor | None,
    tau: float,
    resolution: tuple[int, int],
    margin: int = 0,
) -> torch.Tensor:
    """Render (N, K, 2) keypoints into a (N, K+1, H, W) heatmap stack.

    Channel K is the background map ``1 - max_j H_j`` where the max runs over
    active keypoints only; with no active keypoint it is 1 everywhere.
    Inactive keypoints contribute an all-zero map.
    """
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    if coords.dim() == 2:
        coords = coords[None]
    batch, num_kp, _ = coords.shape
    grid = grid_coords(resolution, margin, device=coords.device, dtype=coords.dtype)
    # (N, K, H, W) squared distances
    diff = grid[None, None] - coords[:, :, None, None, :]
    sq_dist = diff.pow(2).sum(dim=-1)
    maps = torch.exp(-sq_dist / tau)
    if active is not None:
        mask = active.to(dtype=maps.dtype, device=maps.device)
        if mask.dim() == 1:
            mask = mask[None].expand(batch, -1)
        maps = maps * mask[:, :, None, None]
        any_active = mask.amax(dim=1) > 0
    else:
        any_active = torch.ones(batch, dtype=torch.bool, device=maps.device)
    peak = maps.amax(dim=1)
    peak = torch.where(any_active[:, None, None], peak, torch.zeros_like(peak))
    background = 1.0 - peak
    return torch.cat([maps, background[:, None]], dim=1)


def style_channels(num_keypoints: int, embed_dim: int, mode: EmbeddingMode) -> int:
    """Channel count of one style-map level for a given embedding mode."""
    if mode == EmbeddingMode.NONE:
        return num_keypoints + embed_dim
    return (num_keypoints + 1) * embed_dim


def build_style_map(
    heatmaps: torch.Tensor,
    emb: EmbeddingSet,
    mode: EmbeddingMode = EmbeddingMode.MULTIPLICATIVE,
) -> torch.Tensor:
    """Broadcast embeddings over a (N, K+1, H, W) heatmap stack.

    Returns (N, (K+1)*D, H, W) with the fixed channel layout
    [kp_0 block | kp_1 block | ... | bg block]; in the embedding-free mode the
    keypoint blocks are the raw heatmaps, giving (N, K+D, H, W).
    """
    num_kp = heatmaps.shape[1] - 1
    kp_maps, bg_map = heatmaps[:, :num_kp], heatmaps[:, num_kp:]
    bg_block = bg_map * emb.w_bg[:, :, None, None]
    if mode == EmbeddingMode.NONE:
        return torch.cat([kp_maps, bg_block], dim=1)
    w = emb.w_per_kp
    if w is None:
        raise ValueError(f"embedding mode {mode} requires per-keypoint embeddings")
    blocks = kp_maps[:, :, None] * w[:, :, :, None, None]
    blocks = blocks.reshape(w.shape[0], num_kp * w.shape[2], *heatmaps.shape[-2:])
    return torch.cat([blocks, bg_block], dim=1)


def build_style_pyramid(
    heatmap_resolutions: list[tuple[int, int]],
    coords: torch.Tensor,
    active: torch.Tensor | None,
    emb: EmbeddingSet,
    tau: float,
    margin: int = 0,
    mode: EmbeddingMode = EmbeddingMode.MULTIPLICATIVE,
    background_enabled: bool = True,
) -> list[torch.Tensor]:
    """Style maps at every requested resolution, coarsest first.

    Resolutions must be strictly increasing with each level dividing the next.
    `tau` is shared across levels: coordinates are normalized, so the bump's
    physical extent is resolution-independent. With `background_enabled` off
    the background block is zeroed (its heatmap is treated as 0 everywhere).
    """
    if not heatmap_resolutions:
        raise ValueError("heatmap_resolutions must be non-empty")
    for prev, cur in zip(heatmap_resolutions, heatmap_resolutions[1:]):
        if not (cur[0] > prev[0] and cur[1] > prev[1]):
            raise ValueError(f"resolutions must strictly increase, got {heatmap_resolutions}")
        if cur[0] % prev[0] or cur[1] % prev[1]:
            raise ValueError(f"each resolution must divide the next, got {heatmap_resolutions}")
    levels = []
    for res in heatmap_resolutions:
        stack = render_heatmaps(coords, active, tau, res, margin)
        if not background_enabled:
            stack = torch.cat(
                [stack[:, :-1], torch.zeros_like(stack[:, -1:])], dim=1
            )
        levels.append(build_style_map(stack, emb, mode))
    return levels
