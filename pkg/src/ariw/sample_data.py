"""Deterministic natural-image crops from the images bundled with scikit-image.

Needs ``scikit-image`` (the ``test`` extra).  Training and held-out crops
come from disjoint source photographs.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .data import save_png
from .tensor_core import RngStream

__all__ = ["TRAIN_SOURCES", "HELDOUT_SOURCES", "natural_crops", "write_crops"]

TRAIN_SOURCES = (
    "astronaut",
    "chelsea",
    "hubble_deep_field",
    "immunohistochemistry",
    "retina",
    "stereo_motorcycle",
    "coins",
    "moon",
    "grass",
    "brick",
    "cell",
    "clock",
)
HELDOUT_SOURCES = ("coffee", "rocket", "camera", "gravel")


def _load_source(name: str) -> np.ndarray:
    import skimage.data

    img = getattr(skimage.data, name)()
    if isinstance(img, tuple):
        img = img[0]
    img = np.asarray(img)
    if img.ndim == 2:
        img = np.repeat(img[..., None], 3, axis=2)
    return img[..., :3].astype(np.uint8)


def natural_crops(n: int, size: int = 64, split: str = "train", seed: int = 0) -> list:
    """``n`` H x W x 3 float32 crops in [0, 1], cycling over the split's sources."""
    sources = TRAIN_SOURCES if split == "train" else HELDOUT_SOURCES
    rng = RngStream(seed, f"sample_data.{split}")
    loaded = [_load_source(s) for s in sources]
    crops = []
    for i in range(n):
        src = loaded[i % len(loaded)]
        h, w = src.shape[:2]
        # shrink so a crop covers a sizeable part of the scene
        short = int(rng.integers(2 * size, 4 * size + 1))
        f = short / min(h, w)
        im = PILImage.fromarray(src).resize((max(size, round(w * f)), max(size, round(h * f))), PILImage.BILINEAR)
        arr = np.asarray(im)
        top = int(rng.integers(0, arr.shape[0] - size + 1))
        left = int(rng.integers(0, arr.shape[1] - size + 1))
        crops.append(arr[top : top + size, left : left + size].astype(np.float32) / 255.0)
    return crops


def write_crops(folder, n: int, size: int = 64, split: str = "train", seed: int = 0) -> Path:
    folder = Path(folder)
    folder.mkdir(parents=True, exist_ok=True)
    for i, crop in enumerate(natural_crops(n, size, split, seed)):
        save_png(crop, folder / f"{split}_{i:03d}.png")
    return folder
