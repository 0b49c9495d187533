"""Dataset ingestion and the procedural shapes dataset used for desk-scale runs.

A dataset directory is a flat folder of 8-bit RGB images, optionally ordered
by a `list.txt` file. Loading decodes, optionally applies the 70-100% random
square crop at a uniform position, resizes with antialiased bilinear
filtering, and scales values to [-1, 1].

The synthetic dataset draws two high-contrast objects (a disc and a square in
fixed palette colors) at jittered positions over a random smooth gradient
background, and records each object center in the same normalized pixel-center
coordinates the rest of the package uses: x_norm = (2*px + 1)/W - 1.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image


@dataclass
class DatasetHandle:
    root: Path
    resolution: int
    augment_crop: bool
    file_list: list[Path]

    def __len__(self) -> int:
        return len(self.file_list)


def open_dataset(root, resolution: int, augment_crop: bool = False) -> DatasetHandle:
    root = Path(root)
    listing = root / "list.txt"
    if listing.exists():
        names = [line.strip() for line in listing.read_text().splitlines() if line.strip()]
        files = [root / n for n in names]
    else:
        exts = {".png", ".jpg", ".jpeg"}
        files = sorted(p for p in root.iterdir() if p.suffix.lower() in exts)
    if not files:
        raise FileNotFoundError(f"no images found under {root}")
    return DatasetHandle(root, resolution, augment_crop, files)


def load_image(path) -> torch.Tensor:
    """Decode one image to a (3, H, W) float tensor in [-1, 1]."""
    with Image.open(path) as img:
        if img.mode in ("I", "I;16", "I;16B", "I;16L", "F"):
            raise ValueError(f"{path}: 16-bit / float images are not supported, use 8-bit RGB")
        rgb = img.convert("RGB")
        arr = np.asarray(rgb, dtype=np.float32)
    tensor = torch.from_numpy(arr).permute(2, 0, 1)
    return tensor / 127.5 - 1.0


def _random_crop_params(
    height: int, width: int, generator: torch.Generator
) -> tuple[int, int, int]:
    """Square crop side in [0.7, 1.0] x short side, at a uniform position."""
    short = min(height, width)
    frac = 0.7 + 0.3 * torch.rand((), generator=generator).item()
    side = max(1, round(frac * short))
    top = torch.randint(0, height - side + 1, (), generator=generator).item()
    left = torch.randint(0, width - side + 1, (), generator=generator).item()
    return top, left, side


def _prepare(image: torch.Tensor, resolution: int, crop=None) -> torch.Tensor:
    if crop is not None:
        top, left, side = crop
        image = image[:, top : top + side, left : left + side]
    if image.shape[-2:] != (resolution, resolution):
        image = F.interpolate(
            image[None],
            size=(resolution, resolution),
            mode="bilinear",
            align_corners=False,
            antialias=True,
        )[0]
    return image


def load_batch(
    handle: DatasetHandle,
    batch_size: int,
    generator: torch.Generator,
) -> torch.Tensor:
    """Draw a random batch; sampling and crop noise come from `generator`."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    out, failures = [], 0
    while len(out) < batch_size:
        idx = torch.randint(0, len(handle.file_list), (), generator=generator).item()
        path = handle.file_list[idx]
        try:
            image = load_image(path)
        except (OSError, ValueError) as exc:
            failures += 1
            warnings.warn(f"skipping {path}: {exc}")
            if failures > max(10, 2 * len(handle.file_list)):
                raise OSError(f"could not decode any image under {handle.root}") from exc
            continue
        crop = None
        if handle.augment_crop:
            crop = _random_crop_params(image.shape[1], image.shape[2], generator)
        out.append(_prepare(image, handle.resolution, crop))
    return torch.stack(out)


def load_all(handle: DatasetHandle) -> torch.Tensor:
    """Every image, un-augmented, in file order."""
    return torch.stack([_prepare(load_image(p), handle.resolution) for p in handle.file_list])


def tensor_to_uint8(image: torch.Tensor) -> np.ndarray:
    """(3, H, W) in [-1, 1] -> (H, W, 3) uint8."""
    arr = ((image.detach().float() + 1.0) * 127.5).round().clamp(0, 255)
    return arr.permute(1, 2, 0).numpy().astype(np.uint8)


def tensor_to_png_bytes(image: torch.Tensor) -> bytes:
    import io

    buf = io.BytesIO()
    Image.fromarray(tensor_to_uint8(image)).save(buf, format="PNG")
    return buf.getvalue()


def save_image_png(image: torch.Tensor, path) -> None:
    Image.fromarray(tensor_to_uint8(image)).save(path)


DEFAULT_PALETTE = ((255, 30, 30), (30, 60, 255))


@dataclass
class SyntheticShapesSpec:
    image_size: int = 64
    palette: tuple = DEFAULT_PALETTE  # disc color, square color
    # jitter boxes (x_lo, x_hi, y_lo, y_hi) in pixels at image_size=64, scaled;
    # both objects share the central region and are kept apart by rejection
    disc_box: tuple = (14, 50, 14, 50)
    square_box: tuple = (14, 50, 14, 50)
    min_separation: float = 8.0
    # when set, centers follow a truncated normal of this sigma (px at 64)
    # around the box center instead of a uniform draw
    position_sigma: float | None = 11.0
    radius_range: tuple = (6, 9)
    halfside_range: tuple = (5, 8)
    square_shape: str = "square"  # "disc" renders the second object round too
    background_low: int = 40
    background_high: int = 140


def _pixel_center_norm(px: np.ndarray, size: int) -> np.ndarray:
    return (2.0 * px + 1.0) / size - 1.0


def _scaled_box(box, size: int) -> tuple:
    s = size / 64.0
    return tuple(int(round(v * s)) for v in box)


def _draw_sample(spec: SyntheticShapesSpec, rng: np.random.Generator):
    size = spec.image_size
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)

    # smooth gradient background between two muted colors
    c0 = rng.integers(spec.background_low, spec.background_high, 3)
    c1 = rng.integers(spec.background_low, spec.background_high, 3)
    angle = rng.uniform(0, 2 * np.pi)
    proj = (xx * np.cos(angle) + yy * np.sin(angle)) / size
    t = (proj - proj.min()) / max(proj.max() - proj.min(), 1e-9)
    img = c0[None, None, :] + t[..., None] * (c1 - c0)[None, None, :]

    s = spec.image_size / 64.0

    def draw_center(box) -> np.ndarray:
        x_lo, x_hi, y_lo, y_hi = box
        if spec.position_sigma is None:
            return np.array([rng.integers(x_lo, x_hi + 1), rng.integers(y_lo, y_hi + 1)])
        sigma = spec.position_sigma * s
        mid = np.array([(x_lo + x_hi) / 2.0, (y_lo + y_hi) / 2.0])
        while True:  # truncate to the box by rejection
            c = np.rint(rng.normal(mid, sigma)).astype(np.int64)
            if x_lo <= c[0] <= x_hi and y_lo <= c[1] <= y_hi:
                return c

    disc_box = _scaled_box(spec.disc_box, size)
    square_box = _scaled_box(spec.square_box, size)
    disc_c = draw_center(disc_box)
    square_c = draw_center(square_box)
    while np.linalg.norm(square_c - disc_c) < spec.min_separation * s:
        square_c = draw_center(square_box)
    radius = rng.uniform(spec.radius_range[0] * s, spec.radius_range[1] * s)
    halfside = rng.uniform(spec.halfside_range[0] * s, spec.halfside_range[1] * s)

    disc_mask = (xx - disc_c[0]) ** 2 + (yy - disc_c[1]) ** 2 <= radius**2
    if spec.square_shape == "disc":
        square_mask = (xx - square_c[0]) ** 2 + (yy - square_c[1]) ** 2 <= halfside**2
    else:
        square_mask = (np.abs(xx - square_c[0]) <= halfside) & (np.abs(yy - square_c[1]) <= halfside)
    img[disc_mask] = spec.palette[0]
    img[square_mask] = spec.palette[1]

    centers = np.stack([disc_c, square_c]).astype(np.float64)
    return np.clip(img, 0, 255).astype(np.uint8), _pixel_center_norm(centers, size)


def make_synthetic_dataset(
    spec: SyntheticShapesSpec, count: int, seed: int, out_dir
) -> tuple[DatasetHandle, list[tuple]]:
    """Write `count` images plus ground-truth centers; deterministic per seed.

    The ground-truth CSV has one row per object:
    ``filename,obj_index,x_norm,y_norm``.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    table = []
    for i in range(count):
        img, centers = _draw_sample(spec, rng)
        name = f"shapes_{i:05d}.png"
        Image.fromarray(img).save(out_dir / name)
        for obj_index, (x, y) in enumerate(centers):
            table.append((name, obj_index, float(x), float(y)))
    with open(out_dir / "ground_truth.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["filename", "obj_index", "x_norm", "y_norm"])
        for row in table:
            writer.writerow([row[0], row[1], repr(row[2]), repr(row[3])])
    handle = open_dataset(out_dir, spec.image_size)
    return handle, table


def read_ground_truth(path) -> dict[str, list[tuple[float, float]]]:
    out: dict[str, list[tuple[float, float]]] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.setdefault(row["filename"], []).append(
                (float(row["x_norm"]), float(row["y_norm"]))
            )
    return out


def locate_palette_objects(
    image: torch.Tensor,
    palette=DEFAULT_PALETTE,
    color_threshold: float = 80.0,
    min_pixels: int = 10,
    pad: int = 2,
) -> list[tuple[int, int, int, int]]:
    """Bounding boxes (x0, y0, x1, y1), inclusive, of palette-colored regions.

    `image` is (3, H, W) in [-1, 1]. Returns one box per palette color that
    has at least `min_pixels` pixels within `color_threshold` RGB distance;
    the box spans the 2nd-98th percentile of matched pixel coordinates so a
    few stray speckles cannot inflate it. Used as an independent oracle for
    where objects sit in generated images.
    """
    arr = ((image.detach().float() + 1.0) * 127.5).clamp(0, 255).permute(1, 2, 0).numpy()
    height, width, _ = arr.shape
    boxes = []
    for color in palette:
        dist = np.sqrt(((arr - np.array(color)[None, None]) ** 2).sum(-1))
        ys, xs = np.nonzero(dist < color_threshold)
        if len(xs) < min_pixels:
            continue
        x_lo, x_hi = np.percentile(xs, [2, 98])
        y_lo, y_hi = np.percentile(ys, [2, 98])
        boxes.append(
            (
                max(int(x_lo) - pad, 0),
                max(int(y_lo) - pad, 0),
                min(int(round(x_hi)) + pad, width - 1),
                min(int(round(y_hi)) + pad, height - 1),
            )
        )
    return boxes


def heatmap_mass_ratio(
    heatmaps: torch.Tensor, boxes: list[tuple[int, int, int, int]]
) -> tuple[float, float]:
    """(keypoint mass fraction inside boxes, box area fraction).

    `heatmaps` is the (K+1, H, W) stack; the background channel is ignored.
    A ratio above the area fraction means keypoints concentrate on the boxes.
    """
    kp_maps = heatmaps[:-1]
    height, width = kp_maps.shape[-2:]
    box_mask = torch.zeros(height, width, dtype=torch.bool)
    for x0, y0, x1, y1 in boxes:
        box_mask[y0 : y1 + 1, x0 : x1 + 1] = True
    total = float(kp_maps.sum())
    if total <= 0:
        return 0.0, float(box_mask.sum()) / (height * width)
    inside = float(kp_maps[:, box_mask].sum())
    return inside / total, float(box_mask.sum()) / (height * width)
