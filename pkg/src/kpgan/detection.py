"""GAN-supervised keypoint detection.

The trained generator emits image-keypoint pairs on the fly; a small residual
convolutional detector regresses normalized coordinates from the images (MSE
on coordinates, tanh head). Because the order and semantics of discovered
keypoints are undefined, evaluation against annotated landmarks first fits an
unbiased linear regressor from predicted keypoints to the ground truth and
then reports the mean Euclidean error as a percentage of the per-sample
inter-ocular distance.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .keypoint_generator import sample_latents
from .model import KeypointGanModel
from .rng import make_generator


class _ResBlock(nn.Module):
    def __init__(self, in_channels: int, out_channels: int, stride: int = 2):
        super().__init__()
        self.conv1 = nn.Conv2d(in_channels, out_channels, 3, stride=stride, padding=1)
        self.conv2 = nn.Conv2d(out_channels, out_channels, 3, padding=1)
        self.skip = nn.Conv2d(in_channels, out_channels, 1, stride=stride)

    def forward(self, x):
        h = F.relu(self.conv1(x))
        h = self.conv2(h)
        return F.relu(h + self.skip(x))


class KeypointDetector(nn.Module):
    """Residual conv backbone, global pooling, tanh coordinate head."""

    def __init__(self, num_keypoints: int, base_channels: int = 32, depth: int = 4):
        super().__init__()
        self.num_keypoints = num_keypoints
        self.stem = nn.Conv2d(3, base_channels, 3, padding=1)
        blocks = []
        ch = base_channels
        for _ in range(depth):
            nxt = min(2 * ch, 8 * base_channels)
            blocks.append(_ResBlock(ch, nxt))
            ch = nxt
        self.blocks = nn.Sequential(*blocks)
        self.head = nn.Linear(ch, 2 * num_keypoints)

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        h = F.relu(self.stem(images))
        h = self.blocks(h)
        h = h.mean(dim=(2, 3))
        return torch.tanh(self.head(h)).reshape(-1, self.num_keypoints, 2)


def generate_pairs(
    model: KeypointGanModel,
    count: int,
    seed: int,
    batch_size: int = 32,
):
    """Yield (images, coords) batches from the generator, `count` pairs total.

    Deterministic per seed; the recorded coordinates are exactly the
    conditioning coordinates of the rendered images.
    """
    model.eval()
    g = make_generator(seed)
    remaining = count
    with torch.no_grad():
        while remaining > 0:
            n = min(batch_size, remaining)
            latents = sample_latents(n, model.config.noise_dim, generator=g)
            sample = model.generate(latents)
            yield sample.image, sample.coords
            remaining -= n


def collect_pairs(model, count, seed, batch_size=32):
    images, coords = [], []
    for img, kps in generate_pairs(model, count, seed, batch_size):
        images.append(img)
        coords.append(kps)
    return torch.cat(images), torch.cat(coords)


def fit_detector(
    images_u8: torch.Tensor,
    coords: torch.Tensor,
    epochs: int = 3,
    lr: float = 1e-3,
    batch_size: int = 64,
    seed: int = 0,
    holdout_fraction: float = 0.05,
    detector: KeypointDetector | None = None,
    log=None,
) -> tuple[KeypointDetector, dict]:
    """Fit a detector to (uint8 images, normalized coords) pairs.

    The leading `holdout_fraction` of the data is reserved; the returned
    weights are the epoch snapshot with the lowest holdout error.
    """
    torch.manual_seed(seed)
    detector = detector or KeypointDetector(coords.shape[1])
    n_holdout = min(max(int(holdout_fraction * len(images_u8)), batch_size), len(images_u8) - 1)
    hold_images, hold_coords = images_u8[:n_holdout], coords[:n_holdout]
    train_images, train_coords = images_u8[n_holdout:], coords[n_holdout:]

    opt = torch.optim.Adam(detector.parameters(), lr=lr)
    g = make_generator(seed + 2)
    best_state, best_err = None, float("inf")
    history = {"train_loss": [], "holdout_error": []}

    def holdout_error() -> float:
        detector.eval()
        errs = []
        with torch.no_grad():
            for i in range(0, len(hold_images), batch_size):
                imgs = hold_images[i : i + batch_size].float() / 127.5 - 1.0
                pred = detector(imgs)
                errs.append((pred - hold_coords[i : i + batch_size]).norm(dim=-1).mean())
        detector.train()
        return float(torch.stack(errs).mean())

    detector.train()
    steps_per_epoch = max(len(train_images) // batch_size, 1)
    for epoch in range(epochs):
        perm = torch.randperm(len(train_images), generator=g)
        for s in range(steps_per_epoch):
            idx = perm[s * batch_size : (s + 1) * batch_size]
            imgs = train_images[idx].float() / 127.5 - 1.0
            pred = detector(imgs)
            loss = F.mse_loss(pred, train_coords[idx])
            opt.zero_grad(set_to_none=True)
            loss.backward()
            opt.step()
            history["train_loss"].append(float(loss.detach()))
            if log is not None and s % 50 == 0:
                log(f"detector epoch {epoch} step {s}/{steps_per_epoch} loss {loss:.5f}")
        err = holdout_error()
        history["holdout_error"].append(err)
        if err < best_err:
            best_err = err
            best_state = {k: v.detach().clone() for k, v in detector.state_dict().items()}
    if best_state is not None:
        detector.load_state_dict(best_state)
    detector.eval()
    return detector, history


def train_detector(
    model: KeypointGanModel,
    pair_count: int = 200_000,
    epochs: int = 3,
    lr: float = 1e-3,
    batch_size: int = 64,
    seed: int = 0,
    holdout_fraction: float = 0.05,
    detector: KeypointDetector | None = None,
    log=None,
) -> tuple[KeypointDetector, dict]:
    """Train a detector on pairs generated by `model`; best-on-holdout weights.

    Pairs are generated once (streamed in batches, images kept as uint8 to
    bound memory) and reused across epochs.
    """
    images_u8, coords = [], []
    for img, kps in generate_pairs(model, pair_count, seed=seed + 1, batch_size=batch_size):
        images_u8.append(((img + 1.0) * 127.5).round().clamp(0, 255).to(torch.uint8))
        coords.append(kps)
    return fit_detector(
        torch.cat(images_u8),
        torch.cat(coords),
        epochs=epochs,
        lr=lr,
        batch_size=batch_size,
        seed=seed,
        holdout_fraction=holdout_fraction,
        detector=detector,
        log=log,
    )


def fit_linear_regressor(
    pred: np.ndarray, gt: np.ndarray, ridge: float = 1e-8
) -> tuple[np.ndarray, bool]:
    """Least-squares map from (M, 2K) predictions to (M, 2L) landmarks, no bias.

    Solved in closed form via the normal equations with a tiny ridge for
    conditioning; rank deficiency of the predictions is flagged so reports can
    note that the minimum-norm solution was taken.
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.ndim != 2 or gt.ndim != 2 or pred.shape[0] != gt.shape[0]:
        raise ValueError(f"incompatible shapes {pred.shape} and {gt.shape}")
    if pred.shape[0] < pred.shape[1]:
        raise ValueError("need at least as many samples as prediction columns")
    gram = pred.T @ pred
    rank = np.linalg.matrix_rank(gram)
    deficient = bool(rank < pred.shape[1])
    if deficient:
        weights = np.linalg.pinv(pred) @ gt
    else:
        weights = np.linalg.solve(gram + ridge * np.eye(gram.shape[0]), pred.T @ gt)
    return weights, deficient


@dataclass
class EvalReport:
    mean_error_pct: float
    per_landmark_pct: list[float]
    weights: np.ndarray
    rank_deficient: bool
    excluded: int


def evaluate_regression(
    pred_keypoints: np.ndarray,
    gt_landmarks: np.ndarray,
    interocular: np.ndarray,
    weights: np.ndarray | None = None,
    rank_deficient: bool = False,
) -> EvalReport:
    """Error of regressed landmarks in percent of inter-ocular distance.

    `pred_keypoints` is (M, 2K) flat, `gt_landmarks` (M, L, 2), `interocular`
    (M,) in the same units as the landmarks. Samples with non-positive
    inter-ocular distance are excluded with a warning.
    """
    pred_keypoints = np.asarray(pred_keypoints, dtype=np.float64)
    gt_landmarks = np.asarray(gt_landmarks, dtype=np.float64)
    interocular = np.asarray(interocular, dtype=np.float64)
    valid = interocular > 0
    excluded = int((~valid).sum())
    if excluded:
        warnings.warn(f"excluding {excluded} samples with non-positive inter-ocular distance")
    pred_keypoints = pred_keypoints[valid]
    gt_landmarks = gt_landmarks[valid]
    interocular = interocular[valid]
    if weights is None:
        weights, rank_deficient = fit_linear_regressor(
            pred_keypoints, gt_landmarks.reshape(len(gt_landmarks), -1)
        )
    regressed = (pred_keypoints @ weights).reshape(gt_landmarks.shape)
    dist = np.linalg.norm(regressed - gt_landmarks, axis=-1)  # (M, L)
    pct = 100.0 * dist / interocular[:, None]
    return EvalReport(
        mean_error_pct=float(pct.mean()),
        per_landmark_pct=[float(v) for v in pct.mean(axis=0)],
        weights=weights,
        rank_deficient=rank_deficient,
        excluded=excluded,
    )


# -- ground-truth CSV: filename,x1,y1,...,xL,yL,interocular_px ---------------


def write_landmark_csv(path, rows: list[tuple[str, np.ndarray, float]]) -> None:
    """Each row: (filename, (L, 2) pixel coords, interocular_px)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for name, landmarks, inter in rows:
            flat = [repr(float(v)) for xy in np.asarray(landmarks) for v in xy]
            writer.writerow([name, *flat, repr(float(inter))])


def read_landmark_csv(path) -> list[tuple[str, np.ndarray, float]]:
    rows = []
    with open(path, newline="") as fh:
        for record in csv.reader(fh):
            if not record or record[0] == "filename":
                continue
            name = record[0]
            values = [float(v) for v in record[1:]]
            landmarks = np.array(values[:-1], dtype=np.float64).reshape(-1, 2)
            rows.append((name, landmarks, values[-1]))
    return rows


def save_detector(path, detector: KeypointDetector, extra: dict | None = None) -> None:
    from .checkpoint import save_checkpoint

    manifest = {
        "kind": "detector",
        "num_keypoints": detector.num_keypoints,
        "base_channels": detector.stem.out_channels,
        "depth": len(detector.blocks),
    }
    if extra:
        manifest.update(extra)
    tensors = {f"detector.{k}": v for k, v in detector.state_dict().items()}
    save_checkpoint(path, manifest, tensors)


def load_detector(path) -> tuple[KeypointDetector, dict]:
    from .checkpoint import load_checkpoint

    manifest, tensors = load_checkpoint(path)
    detector = KeypointDetector(
        manifest["num_keypoints"], manifest["base_channels"], manifest["depth"]
    )
    detector.load_state_dict(
        {k[len("detector.") :]: v for k, v in tensors.items() if k.startswith("detector.")}
    )
    detector.eval()
    return detector, manifest
