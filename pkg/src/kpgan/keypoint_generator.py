"""Latent-to-keypoint mapping.

Three Gaussian noise vectors drive three independent three-layer perceptrons:
one emits K keypoint coordinates squashed into [-1, 1]^2, one a global style
vector, one a background embedding. Per-keypoint appearance embeddings combine
the global style vector with a learned per-keypoint constant embedding,
elementwise multiplication by default.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import torch
from torch import nn

from .rng import make_generator


class EmbeddingMode(str, Enum):
    """How per-keypoint embeddings are produced.

    multiplicative: w_per_kp[j] = w_global * w_const[j]  (default)
    additive:       w_per_kp[j] = w_global + w_const[j]
    contrastive:    all K embeddings jointly from one perceptron, trained with
                    a contrastive loss instead of the constant/global split
    none:           no per-keypoint embeddings, only the background embedding
    """

    MULTIPLICATIVE = "multiplicative"
    ADDITIVE = "additive"
    CONTRASTIVE = "contrastive"
    NONE = "none"


@dataclass
class LatentTriple:
    """The three input noise vectors, batched as (N, noise_dim) tensors."""

    pose: torch.Tensor
    appearance: torch.Tensor
    background: torch.Tensor

    def __post_init__(self):
        shapes = {self.pose.shape, self.appearance.shape, self.background.shape}
        if len(shapes) != 1:
            raise ValueError(f"latent vectors must share one shape, got {shapes}")
        for name in ("pose", "appearance", "background"):
            t = getattr(self, name)
            if not torch.isfinite(t).all():
                raise ValueError(f"latent vector '{name}' contains non-finite values")

    @property
    def batch_size(self) -> int:
        return self.pose.shape[0]

    @property
    def noise_dim(self) -> int:
        return self.pose.shape[-1]

    def to(self, *args, **kwargs) -> "LatentTriple":
        return LatentTriple(
            self.pose.to(*args, **kwargs),
            self.appearance.to(*args, **kwargs),
            self.background.to(*args, **kwargs),
        )


@dataclass
class EmbeddingSet:
    """Appearance embeddings for a batch.

    w_global:  (N, embed_dim) or None (contrastive / none modes)
    w_const:   (K, embed_dim) learned constants, shared across the batch, or None
    w_bg:      (N, embed_dim)
    w_per_kp:  (N, K, embed_dim) or None (none mode)
    """

    w_global: torch.Tensor | None
    w_const: torch.Tensor | None
    w_bg: torch.Tensor
    w_per_kp: torch.Tensor | None


def sample_latents(
    count: int,
    noise_dim: int,
    seed: int | None = None,
    generator: torch.Generator | None = None,
) -> LatentTriple:
    """Draw `count` i.i.d. standard-normal latent triples.

    Deterministic for a fixed seed; `generator` takes precedence over `seed`
    so callers with a long-lived RNG stream can keep using it.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    if noise_dim < 1:
        raise ValueError(f"noise_dim must be >= 1, got {noise_dim}")
    g = generator if generator is not None else make_generator(seed)
    draw = torch.randn(3, count, noise_dim, generator=g)
    return LatentTriple(pose=draw[0], appearance=draw[1], background=draw[2])


def combine_per_keypoint(
    w_global: torch.Tensor, w_const: torch.Tensor, mode: EmbeddingMode
) -> torch.Tensor:
    """Combine (N, D) global style with (K, D) constants into (N, K, D)."""
    if mode == EmbeddingMode.MULTIPLICATIVE:
        return w_global[:, None, :] * w_const[None, :, :]
    if mode == EmbeddingMode.ADDITIVE:
        return w_global[:, None, :] + w_const[None, :, :]
    raise ValueError(f"mode {mode} does not combine global and constant embeddings")


def _three_layer_mlp(in_dim: int, hidden_dim: int, out_dim: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Linear(in_dim, hidden_dim),
        nn.LeakyReLU(0.2),
        nn.Linear(hidden_dim, hidden_dim),
        nn.LeakyReLU(0.2),
        nn.Linear(hidden_dim, out_dim),
    )


def _init_linear(module: nn.Module, slope: float = 0.2):
    for m in module.modules():
        if isinstance(m, nn.Linear):
            nn.init.kaiming_normal_(m.weight, a=slope, nonlinearity="leaky_relu")
            nn.init.zeros_(m.bias)


class KeypointGenerator(nn.Module):
    """Maps a LatentTriple to keypoint coordinates and appearance embeddings.

    The three perceptrons are fully independent; hidden width defaults to the
    noise dimension. The coordinate head is tanh-squashed so coordinates stay
    in [-1, 1] for arbitrary finite inputs, and its final layer starts at
    0.05x the Kaiming scale so keypoints begin near the image center.
    """

    def __init__(
        self,
        noise_dim: int,
        embed_dim: int,
        num_keypoints: int,
        mode: EmbeddingMode = EmbeddingMode.MULTIPLICATIVE,
        hidden_dim: int | None = None,
        head_init_scale: float = 0.05,
        head_calibration_std: float | None = None,
    ):
        super().__init__()
        if num_keypoints < 1:
            raise ValueError("num_keypoints must be >= 1")
        self.noise_dim = noise_dim
        self.embed_dim = embed_dim
        self.num_keypoints = num_keypoints
        self.mode = EmbeddingMode(mode)
        hidden_dim = hidden_dim or noise_dim

        self.pose_mlp = _three_layer_mlp(noise_dim, hidden_dim, 2 * num_keypoints)
        _init_linear(self.pose_mlp)
        with torch.no_grad():
            self.pose_mlp[-1].weight.mul_(head_init_scale)
        if head_calibration_std is not None:
            self._calibrate_pose_head(head_calibration_std)

        self.background_mlp = _three_layer_mlp(noise_dim, hidden_dim, embed_dim)
        _init_linear(self.background_mlp)

        if self.mode in (EmbeddingMode.MULTIPLICATIVE, EmbeddingMode.ADDITIVE):
            self.style_mlp = _three_layer_mlp(noise_dim, hidden_dim, embed_dim)
            _init_linear(self.style_mlp)
            # scaled so initial per-keypoint embeddings have variance comparable
            # to the global style vector
            self.w_const = nn.Parameter(
                torch.randn(num_keypoints, embed_dim) / math.sqrt(embed_dim)
            )
        elif self.mode == EmbeddingMode.CONTRASTIVE:
            self.style_mlp = _three_layer_mlp(
                noise_dim, hidden_dim, num_keypoints * embed_dim
            )
            _init_linear(self.style_mlp)
            self.w_const = None
        else:
            self.style_mlp = None
            self.w_const = None

    def _calibrate_pose_head(self, target_std: float):
        """Data-dependent init of the coordinate head: rescale and recenter the
        final layer so pre-squash outputs are zero-mean with `target_std` over
        a probe batch. Removes the weight-lottery bias that otherwise plants
        some initial keypoints far off-center."""
        with torch.no_grad():
            probe = torch.randn(
                2048, self.noise_dim, generator=torch.Generator().manual_seed(0x5EED)
            )
            pre = self.pose_mlp(probe)
            mu, sd = pre.mean(dim=0), pre.std(dim=0).clamp_min(1e-6)
            last = self.pose_mlp[-1]
            scale = target_std / sd
            last.weight.mul_(scale[:, None])
            last.bias.copy_((last.bias - mu) * scale)

    def generate_keypoints(self, z_pose: torch.Tensor) -> torch.Tensor:
        """(N, noise_dim) -> (N, K, 2) coordinates in [-1, 1]^2, (x, y) order."""
        if z_pose.shape[-1] != self.noise_dim:
            raise ValueError(
                f"expected pose noise of dim {self.noise_dim}, got {z_pose.shape[-1]}"
            )
        raw = self.pose_mlp(z_pose)
        return torch.tanh(raw).reshape(-1, self.num_keypoints, 2)

    def generate_embeddings(
        self, z_app: torch.Tensor, z_bg: torch.Tensor
    ) -> EmbeddingSet:
        for name, z in (("appearance", z_app), ("background", z_bg)):
            if z.shape[-1] != self.noise_dim:
                raise ValueError(
                    f"expected {name} noise of dim {self.noise_dim}, got {z.shape[-1]}"
                )
        w_bg = self.background_mlp(z_bg)
        if self.mode == EmbeddingMode.NONE:
            return EmbeddingSet(w_global=None, w_const=None, w_bg=w_bg, w_per_kp=None)
        if self.mode == EmbeddingMode.CONTRASTIVE:
            w_per_kp = self.style_mlp(z_app).reshape(
                -1, self.num_keypoints, self.embed_dim
            )
            return EmbeddingSet(w_global=None, w_const=None, w_bg=w_bg, w_per_kp=w_per_kp)
        w_global = self.style_mlp(z_app)
        w_per_kp = combine_per_keypoint(w_global, self.w_const, self.mode)
        return EmbeddingSet(
            w_global=w_global, w_const=self.w_const, w_bg=w_bg, w_per_kp=w_per_kp
        )

    def forward(self, latents: LatentTriple) -> tuple[torch.Tensor, EmbeddingSet]:
        coords = self.generate_keypoints(latents.pose)
        emb = self.generate_embeddings(latents.appearance, latents.background)
        return coords, emb
