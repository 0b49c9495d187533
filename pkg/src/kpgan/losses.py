"""Training objectives.

Both GAN losses are softplus-shaped: the generator minimizes
mean log(exp(-s_fake) + 1) (non-saturating), the critic minimizes
mean log(exp(s_fake) + 1) + mean log(exp(-s_real) + 1) (logistic). The
gradient penalty is the squared L2 norm of the critic's input gradient on
real data only. The background penalty compares foreground-masked images
across two samples that differ only in background noise. All reductions are
means over batch and pixels so the loss weights keep their magnitudes across
resolutions and batch sizes.
"""

from __future__ import annotations

from typing import Callable

import torch
import torch.nn.functional as F


def generator_gan_loss(fake_scores: torch.Tensor) -> torch.Tensor:
    if fake_scores.numel() == 0:
        raise ValueError("fake_scores must be non-empty")
    return F.softplus(-fake_scores).mean()


def discriminator_gan_loss(
    fake_scores: torch.Tensor, real_scores: torch.Tensor
) -> torch.Tensor:
    if fake_scores.numel() == 0 or real_scores.numel() == 0:
        raise ValueError("scores must be non-empty")
    return F.softplus(fake_scores).mean() + F.softplus(-real_scores).mean()


def r1_gradient_penalty(
    real_images: torch.Tensor, critic: Callable[[torch.Tensor], torch.Tensor]
) -> torch.Tensor:
    """Mean squared L2 norm of d score / d image over a real batch.

    Differentiable w.r.t. critic parameters (the gradient graph is retained)
    so it can be added to the critic loss directly.
    """
    images = real_images.detach().requires_grad_(True)
    scores = critic(images)
    (grad,) = torch.autograd.grad(
        outputs=scores.sum(), inputs=images, create_graph=True
    )
    return grad.pow(2).flatten(1).sum(dim=1).mean()


def background_loss(
    img1: torch.Tensor,
    img2: torch.Tensor,
    bg_heatmap1: torch.Tensor,
    bg_heatmap2: torch.Tensor,
    norm: str = "l1",
) -> torch.Tensor:
    """Consistency of foreground-masked images across a background resample.

    The pair must share pose and appearance noise, differing only in the
    background input; the foreground weights are 1 - H_bg.
    """
    if img1.shape != img2.shape:
        raise ValueError(f"image shapes differ: {tuple(img1.shape)} vs {tuple(img2.shape)}")
    if bg_heatmap1.shape != bg_heatmap2.shape:
        raise ValueError("background heatmap shapes differ")
    if bg_heatmap1.dim() == img1.dim() - 1:
        bg_heatmap1 = bg_heatmap1.unsqueeze(-3)
        bg_heatmap2 = bg_heatmap2.unsqueeze(-3)
    diff = (1 - bg_heatmap1) * img1 - (1 - bg_heatmap2) * img2
    if norm == "l1":
        return diff.abs().mean()
    if norm == "l2":
        return diff.pow(2).mean()
    raise ValueError(f"norm must be 'l1' or 'l2', got {norm!r}")


def contrastive_embedding_loss(
    embeddings: torch.Tensor, temperature: float
) -> torch.Tensor:
    """Pull same-index keypoint embeddings together across a batch.

    `embeddings` is (N, K, D); for each anchor, positives are the embeddings
    of the same keypoint index anywhere in the batch, and the denominator sums
    dot-product similarities against every embedding in the batch (anchor
    included in both sets).
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    if embeddings.dim() != 3:
        raise ValueError(f"expected (N, K, D) embeddings, got {tuple(embeddings.shape)}")
    batch, num_kp, dim = embeddings.shape
    if batch < 2:
        raise ValueError("contrastive loss needs a batch of at least 2")
    flat = embeddings.reshape(batch * num_kp, dim)
    sim = flat @ flat.T / temperature
    log_denom = torch.logsumexp(sim, dim=1)  # over A(j): everything in the batch
    kp_index = torch.arange(num_kp, device=embeddings.device).repeat(batch)
    positives = kp_index[:, None] == kp_index[None, :]  # K(j): same keypoint index
    log_prob = sim - log_denom[:, None]
    per_anchor = (log_prob * positives).sum(dim=1) / positives.sum(dim=1)
    return -per_anchor.sum()


def total_losses(
    d_gan: torch.Tensor,
    g_gan: torch.Tensor,
    gradient_penalty: torch.Tensor,
    bg_penalty: torch.Tensor,
    lambda_gp: float = 10.0,
    lambda_bg: float = 100.0,
    contrastive: torch.Tensor | None = None,
    lambda_contrastive: float = 1.0,
) -> tuple[torch.Tensor, torch.Tensor]:
    """(critic total, generator total)."""
    loss_d = d_gan + lambda_gp * gradient_penalty
    loss_g = g_gan + lambda_bg * bg_penalty
    if contrastive is not None:
        loss_g = loss_g + lambda_contrastive * contrastive
    return loss_d, loss_g
