"""Paired cross-view data: manifest format, image codecs, toy generator.

A dataset is a manifest file listing (id, source image, target image,
target-view semantic map) path triples per sample, with paths resolved
relative to the manifest location. Images travel through the models as
float tensors in [-1, 1]; semantic maps as one-hot planes rescaled to the
same range so they match the tanh-bounded network outputs.

The procedural toy dataset renders paired aerial/ground scenes (grass,
one road, a few colored buildings) with geometry shared across the two
views, which gives the translation task real but learnable structure.
"""

import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, NamedTuple, Optional, Sequence

import numpy as np
import torch
from PIL import Image

from .errors import DataError, DomainError

MANIFEST_HEADER = "#crossmlp-manifest-v1"

# class indices of the toy semantic maps
TOY_CLASSES = 4
TOY_CLASS_NAMES = ("sky", "grass", "road", "building")
TOY_PALETTE = [
    (135, 206, 235),  # sky
    (88, 140, 60),    # grass
    (110, 110, 110),  # road
    (200, 80, 60),    # building
]
_BUILDING_COLORS = [
    (200, 80, 60), (70, 90, 160), (190, 160, 70), (150, 80, 150), (90, 150, 150),
]


@dataclass(frozen=True)
class ManifestEntry:
    sample_id: str
    source: Path
    target: Path
    semantic: Path


class SamplePair(NamedTuple):
    sample_id: str
    source: torch.Tensor    # (3, H, W) in [-1, 1]
    target: torch.Tensor    # (3, H, W) in [-1, 1]
    semantic: torch.Tensor  # (K, H, W) in {-1, 1}


class AugmentParams(NamedTuple):
    """One sample's augmentation draw, shared by all three maps."""

    flip: bool
    crop_y: float  # crop-offset fractions in [0, 1)
    crop_x: float


# random crops come from an inflated resize, 286:256 (the usual paired-
# translation convention), scaled proportionally to the working resolution
CROP_INFLATE = 286 / 256


# ---------------------------------------------------------------------------
# manifest format
# ---------------------------------------------------------------------------

def write_manifest(path, entries: Sequence[ManifestEntry]) -> None:
    """Paths are stored relative to the manifest directory when possible."""
    path = Path(path)
    base = path.parent.resolve()

    def rel(p: Path) -> str:
        p = Path(p)
        try:
            return p.resolve().relative_to(base).as_posix()
        except ValueError:
            return p.as_posix()

    lines = [MANIFEST_HEADER]
    for e in entries:
        lines.append("\t".join([e.sample_id, rel(e.source), rel(e.target), rel(e.semantic)]))
    path.write_text("\n".join(lines) + "\n")


def read_manifest(path) -> List[ManifestEntry]:
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines or lines[0].strip() != MANIFEST_HEADER:
        raise DataError(f"{path}: first line must be '{MANIFEST_HEADER}'")
    base = path.parent
    entries = []
    for i, ln in enumerate(lines[1:], start=2):
        if not ln.strip():
            continue
        parts = ln.split("\t")
        if len(parts) != 4:
            raise DataError(f"{path}:{i}: expected 4 tab-separated fields, got {len(parts)}")
        sid, src, tgt, sem = parts
        entries.append(ManifestEntry(sid, base / src, base / tgt, base / sem))
    if not entries:
        raise DataError(f"{path}: manifest lists no samples")
    return entries


# ---------------------------------------------------------------------------
# image codecs
# ---------------------------------------------------------------------------

def _center_crop_square(img: Image.Image) -> Image.Image:
    w, h = img.size
    if w == h:
        return img
    side = min(w, h)
    left = (w - side) // 2
    top = (h - side) // 2
    return img.crop((left, top, left + side, top + side))


def load_image(path, size: Optional[int] = None,
               center_crop: Optional[int] = None) -> np.ndarray:
    """Decode an RGB image to float32 (H, W, 3) in [-1, 1].

    Non-square inputs are center-cropped to a square so aspect is never
    distorted; `center_crop` then optionally takes a centered window of
    that side length (aerial-preprocessing policy, e.g. 224 before a 256
    resize) ahead of the bilinear resize to `size`.
    """
    try:
        img = Image.open(path).convert("RGB")
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read image {path}: {exc}") from exc
    img = _center_crop_square(img)
    if center_crop is not None and center_crop < img.size[0]:
        off = (img.size[0] - center_crop) // 2
        img = img.crop((off, off, off + center_crop, off + center_crop))
    if size is not None and img.size != (size, size):
        img = img.resize((size, size), Image.BILINEAR)
    arr = np.asarray(img, dtype=np.float32)
    return arr / 127.5 - 1.0


def load_semantic(path, classes: int, size: Optional[int] = None) -> np.ndarray:
    """Decode a class-index image to one-hot float32 (H, W, K) in {-1, 1}.

    Accepts palette or grayscale PNGs whose pixel values are class indices;
    resizing uses nearest neighbour to keep indices intact.
    """
    try:
        img = Image.open(path)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read semantic map {path}: {exc}") from exc
    if img.mode not in ("P", "L"):
        img = img.convert("L")
    img = _center_crop_square(img)
    if size is not None and img.size != (size, size):
        img = img.resize((size, size), Image.NEAREST)
    idx = np.asarray(img, dtype=np.int64)
    if idx.max() >= classes:
        raise DataError(
            f"{path}: class index {int(idx.max())} out of range for {classes} classes"
        )
    onehot = np.zeros(idx.shape + (classes,), dtype=np.float32)
    np.put_along_axis(onehot, idx[..., None], 1.0, axis=-1)
    return onehot * 2.0 - 1.0


def save_image(path, array: np.ndarray) -> None:
    """Encode float (H, W, 3) in [-1, 1] to an 8-bit RGB PNG."""
    arr = np.clip((np.asarray(array, dtype=np.float64) + 1.0) * 127.5, 0, 255)
    Image.fromarray(arr.round().astype(np.uint8), mode="RGB").save(path)


def save_semantic(path, indices: np.ndarray, palette=TOY_PALETTE) -> None:
    """Encode an (H, W) class-index array to a palette PNG."""
    img = Image.fromarray(indices.astype(np.uint8), mode="P")
    flat = [c for rgb in palette for c in rgb]
    img.putpalette(flat + [0] * (768 - len(flat)))
    img.save(path)


def semantic_to_indices(semantic: torch.Tensor) -> np.ndarray:
    """(K, H, W) or (B, K, H, W) scores -> integer class indices."""
    return semantic.argmax(dim=-3).cpu().numpy()


# ---------------------------------------------------------------------------
# batching
# ---------------------------------------------------------------------------

def load_pair(entry: ManifestEntry, classes: int, image_size: Optional[int] = None,
              augment: Optional[AugmentParams] = None) -> SamplePair:
    """Load one aligned (source, target, semantic) triple.

    With `augment`, the same horizontal flip and the same random crop from
    an inflated resize are applied to all three maps, keeping them aligned.
    """
    if augment is not None:
        if image_size is None:
            raise DomainError("augmentation needs an explicit image_size")
        inflated = max(image_size + 1, int(round(image_size * CROP_INFLATE)))
        oy = int(augment.crop_y * (inflated - image_size + 1))
        ox = int(augment.crop_x * (inflated - image_size + 1))
        crop = lambda a: a[oy:oy + image_size, ox:ox + image_size]
        src = crop(load_image(entry.source, inflated))
        tgt = crop(load_image(entry.target, inflated))
        sem = crop(load_semantic(entry.semantic, classes, inflated))
        if augment.flip:
            src, tgt, sem = src[:, ::-1], tgt[:, ::-1], sem[:, ::-1]
    else:
        src = load_image(entry.source, image_size)
        tgt = load_image(entry.target, image_size)
        sem = load_semantic(entry.semantic, classes, image_size)
    to_chw = lambda a: torch.from_numpy(np.ascontiguousarray(np.moveaxis(a, -1, 0)))
    return SamplePair(entry.sample_id, to_chw(src), to_chw(tgt), to_chw(sem))


def epoch_order(n: int, seed: int, epoch: int, shuffle: bool = True) -> np.ndarray:
    """Stateless sample permutation: a function of (seed, epoch) only.

    Resuming a run re-derives the exact order for any epoch without
    replaying earlier ones. shuffle=False keeps manifest order.
    """
    if not shuffle:
        return np.arange(n)
    return np.random.default_rng([seed, epoch]).permutation(n)


def draw_augments(n: int, seed: int, epoch: int) -> list:
    """Per-sample augmentation draws, stateless like epoch_order."""
    rng = np.random.default_rng([seed, epoch, 1])
    flips = rng.random(n) < 0.5
    crops = rng.random((n, 2))
    return [AugmentParams(bool(f), float(cy), float(cx))
            for f, (cy, cx) in zip(flips, crops)]


def batches_per_epoch(n_samples: int, batch_size: int) -> int:
    return math.ceil(n_samples / batch_size)


def load_batch(entries: Sequence[ManifestEntry], classes: int,
               image_size: Optional[int],
               augments: Optional[Sequence[Optional[AugmentParams]]] = None):
    """Stack sample pairs into (ids, source, target, semantic) tensors."""
    if not entries:
        raise DomainError("empty batch")
    if augments is None:
        augments = [None] * len(entries)
    pairs = [load_pair(e, classes, image_size, a) for e, a in zip(entries, augments)]
    ids = [p.sample_id for p in pairs]
    return (ids,
            torch.stack([p.source for p in pairs]),
            torch.stack([p.target for p in pairs]),
            torch.stack([p.semantic for p in pairs]))


def iterate_epoch(entries: Sequence[ManifestEntry], classes: int, image_size: int,
                  batch_size: int, seed: int, epoch: int, augment: bool = False,
                  shuffle: bool = True, start_batch: int = 0):
    """Yield (batch_index, ids, source, target, semantic) for one epoch.

    Order and augmentation draws depend only on (seed, epoch), so iteration
    can restart mid-epoch at `start_batch` with identical batches. The final
    partial batch is included.
    """
    order = epoch_order(len(entries), seed, epoch, shuffle)
    draws = draw_augments(len(entries), seed, epoch) if augment else [None] * len(entries)
    n_batches = batches_per_epoch(len(entries), batch_size)
    for b in range(start_batch, n_batches):
        sel = order[b * batch_size:(b + 1) * batch_size]
        ids, src, tgt, sem = load_batch(
            [entries[i] for i in sel], classes, image_size, [draws[i] for i in sel]
        )
        yield b, ids, src, tgt, sem


# ---------------------------------------------------------------------------
# procedural toy dataset
# ---------------------------------------------------------------------------

def _render_toy_scene(size: int, rng: np.random.Generator):
    """One paired scene: aerial RGB, ground RGB, ground class indices."""
    road_x = rng.uniform(0.2, 0.8)
    road_w = rng.uniform(0.06, 0.12)
    n_buildings = int(rng.integers(1, 4))
    buildings = []
    for _ in range(n_buildings):
        buildings.append({
            "x": rng.uniform(0.05, 0.85),
            "w": rng.uniform(0.08, 0.18),
            "depth": rng.uniform(0.2, 1.0),
            "color": _BUILDING_COLORS[int(rng.integers(len(_BUILDING_COLORS)))],
        })

    grass = np.array(TOY_PALETTE[1], dtype=np.float64)
    road = np.array(TOY_PALETTE[2], dtype=np.float64)
    sky = np.array(TOY_PALETTE[0], dtype=np.float64)

    # aerial view: grass field, vertical road strip, building footprints
    aerial = np.tile(grass, (size, size, 1))
    x0 = int(road_x * size)
    x1 = min(size, x0 + max(2, int(road_w * size)))
    aerial[:, x0:x1] = road
    for b in buildings:
        bx0 = int(b["x"] * size)
        bx1 = min(size, bx0 + max(2, int(b["w"] * size)))
        by0 = int((1.0 - b["depth"]) * 0.5 * size)
        by1 = min(size, by0 + max(3, int(0.25 * b["depth"] * size)))
        aerial[by0:by1, bx0:bx1] = b["color"]

    # ground view: sky over grass, road trapezoid, buildings on the horizon
    horizon = int(0.4 * size)
    ground = np.tile(grass, (size, size, 1))
    ground[:horizon] = sky
    labels = np.full((size, size), 1, dtype=np.uint8)
    labels[:horizon] = 0

    rows = np.arange(horizon, size)
    t = (rows - horizon) / max(1, size - 1 - horizon)  # 0 at horizon, 1 at bottom
    half_w = (0.5 * road_w + 1.5 * road_w * t) * size
    centers = road_x * size + (rng.uniform(-0.05, 0.05) * size) * t
    for r, c, hw in zip(rows, centers, half_w):
        c0 = max(0, int(c - hw))
        c1 = min(size, int(c + hw) + 1)
        ground[r, c0:c1] = road
        labels[r, c0:c1] = 2

    for b in sorted(buildings, key=lambda d: d["depth"]):
        bx0 = int(b["x"] * size)
        bx1 = min(size, bx0 + max(2, int(b["w"] * size)))
        height = int((0.25 + 0.65 * b["depth"]) * horizon)
        by0 = max(0, horizon - height)
        by1 = min(size, horizon + max(2, int(0.05 * size)))
        ground[by0:by1, bx0:bx1] = b["color"]
        labels[by0:by1, bx0:bx1] = 3

    noise = rng.normal(0.0, 2.5, size=(size, size, 1))
    aerial = np.clip(aerial + noise, 0, 255)
    ground = np.clip(ground + rng.normal(0.0, 2.5, size=(size, size, 1)), 0, 255)
    return aerial.astype(np.uint8), ground.astype(np.uint8), labels


def generate_toy_dataset(out_dir, n: int, size: int, seed: int) -> Path:
    """Render n paired samples under out_dir and return the manifest path."""
    if n < 1:
        raise DomainError(f"need at least one sample, got {n}")
    if size < 16 or size % 4 != 0:
        raise DomainError(f"size must be >= 16 and divisible by 4, got {size}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    entries = []
    for i in range(n):
        aerial, ground, labels = _render_toy_scene(size, rng)
        sid = f"toy{i:04d}"
        src_path = out_dir / f"{sid}_src.png"
        tgt_path = out_dir / f"{sid}_tgt.png"
        sem_path = out_dir / f"{sid}_sem.png"
        Image.fromarray(aerial, mode="RGB").save(src_path)
        Image.fromarray(ground, mode="RGB").save(tgt_path)
        save_semantic(sem_path, labels)
        entries.append(ManifestEntry(sid, src_path, tgt_path, sem_path))
    manifest = out_dir / "manifest.tsv"
    write_manifest(manifest, entries)
    return manifest
