"""Training configuration and the flat key/value config file format.

Config files are UTF-8 text, one `key = value` per line, `#` comments.
Values mirror TrainConfig fields; the batch table is written as
`batch_by_resolution = 64:128,128:64,256:32,512:8`.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields

from .model import ModelConfig

_DEFAULT_BATCHES = {64: 128, 128: 64, 256: 32, 512: 8}


@dataclass
class TrainConfig:
    # optimization
    lr_g: float = 1e-4
    lr_d: float = 4e-4
    kp_mlp_lr_scale: float = 0.05
    adam_beta1: float = 0.5
    adam_beta2: float = 0.9
    lambda_gp: float = 10.0
    lambda_bg: float = 100.0
    # optional two-phase background-penalty schedule: a softer weight while
    # the painter is still forming content, the full weight afterwards
    lambda_bg_warmup_steps: int = 0
    lambda_bg_warmup_value: float = 0.0
    lambda_contrastive: float = 1.0
    bg_loss_norm: str = "l1"
    # model
    noise_dim: int = 256
    embed_dim: int = 128
    num_keypoints: int = 10
    tau: float = 0.01
    embedding_mode: str = "multiplicative"
    variant: str = "default"
    max_channels: int = 512
    units_per_level: int = 2
    background_enabled: bool = True
    contrastive_temperature: float = 0.1
    kp_head_init_scale: float = 0.05
    kp_head_calibration_std: float | None = None
    # progressive schedule
    start_resolution: int = 64
    final_resolution: int = 512
    rgb_start_resolution: int = 64
    adapt_steps: int = 20_000
    stable_steps: int = 40_000
    batch_by_resolution: dict = field(default_factory=lambda: dict(_DEFAULT_BATCHES))
    batch_size: int | None = None  # overrides the table when set
    # data / bookkeeping
    augment_crop: bool = False
    checkpoint_interval: int = 1000
    log_interval: int = 100
    seed: int = 0

    def __post_init__(self):
        # JSON round-trips turn the batch table's int keys into strings
        self.batch_by_resolution = {int(k): int(v) for k, v in self.batch_by_resolution.items()}
        for name in ("lr_g", "lr_d", "adam_beta1", "adam_beta2", "tau"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("lambda_gp", "lambda_bg", "kp_mlp_lr_scale"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.num_keypoints < 1:
            raise ValueError("num_keypoints must be >= 1")

    def batch_for(self, resolution: int) -> int:
        if self.batch_size is not None:
            return self.batch_size
        if resolution in self.batch_by_resolution:
            return self.batch_by_resolution[resolution]
        raise ValueError(f"no batch size configured for resolution {resolution}")

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            noise_dim=self.noise_dim,
            embed_dim=self.embed_dim,
            num_keypoints=self.num_keypoints,
            tau=self.tau,
            embedding_mode=self.embedding_mode,
            variant=self.variant,
            final_resolution=self.final_resolution,
            rgb_start_resolution=self.rgb_start_resolution,
            max_channels=self.max_channels,
            units_per_level=self.units_per_level,
            background_enabled=self.background_enabled,
            contrastive_temperature=self.contrastive_temperature,
            kp_head_init_scale=self.kp_head_init_scale,
            kp_head_calibration_std=self.kp_head_calibration_std,
        )

    def canonical_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


def smoke_config(**overrides) -> TrainConfig:
    """Desk-scale preset: single 64x64 stage, small widths, two keypoints.

    tau and the coordinate-head init are raised above the paper-scale
    defaults so the two bumps are object-sized and spread over the frame from
    the start; the keypoint learning rate stays at the scheduled 0.05x so the
    painter learns to use the bumps before they can drift away from content.
    """
    base = dict(
        noise_dim=64,
        embed_dim=32,
        num_keypoints=2,
        tau=0.05,
        kp_head_init_scale=0.4,
        kp_head_calibration_std=0.37,
        kp_mlp_lr_scale=0.2,
        max_channels=32,
        units_per_level=1,
        start_resolution=64,
        final_resolution=64,
        rgb_start_resolution=64,
        adapt_steps=0,
        stable_steps=1500,
        batch_size=16,
        lr_g=2e-4,
        lr_d=4e-4,
        checkpoint_interval=1500,
    )
    base.update(overrides)
    return TrainConfig(**base)


def _format_value(value) -> str:
    if isinstance(value, dict):
        return ",".join(f"{k}:{v}" for k, v in sorted(value.items()))
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def _parse_value(raw: str, kind):
    raw = raw.strip()
    if raw.lower() == "none":
        return None
    if kind is dict:
        out = {}
        for part in raw.split(","):
            k, v = part.split(":")
            out[int(k)] = int(v)
        return out
    if kind is bool:
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if kind is int:
        return int(raw)
    if kind is float:
        return float(raw)
    return raw


def write_config(config: TrainConfig, path) -> None:
    lines = [f"{f.name} = {_format_value(getattr(config, f.name))}" for f in fields(config)]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_config(path, **overrides) -> TrainConfig:
    kinds = {}
    for f in fields(TrainConfig):
        if f.name == "batch_by_resolution":
            kinds[f.name] = dict
        elif f.name == "batch_size":
            kinds[f.name] = int
        elif f.type in ("int", int):
            kinds[f.name] = int
        elif f.type in ("float", float):
            kinds[f.name] = float
        elif f.type in ("bool", bool):
            kinds[f.name] = bool
        else:
            kinds[f.name] = str
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key, raw = (part.strip() for part in line.split("=", 1))
            if key not in kinds:
                raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
            values[key] = _parse_value(raw, kinds[key])
    values.update(overrides)
    return TrainConfig(**values)
