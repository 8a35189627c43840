"""Image folder ingestion and PNG I/O."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image as PILImage, UnidentifiedImageError

__all__ = ["IMAGE_SUFFIXES", "ImageFolder", "ingest", "load_image", "save_png", "to_tensor", "to_array"]

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


@dataclass
class ImageFolder:
    path: Path
    target: int
    names: list = field(default_factory=list)
    images: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.images)

    def tensors(self) -> list:
        return [to_tensor(im) for im in self.images]


def load_image(path, target: int | None = None) -> np.ndarray:
    """H x W x 3 float array in [0, 1]; optionally resized to target x target."""
    path = Path(path)
    try:
        with PILImage.open(path) as im:
            im = im.convert("RGB")
            if target is not None and im.size != (target, target):
                im = im.resize((target, target), PILImage.BILINEAR)
            arr = np.asarray(im, dtype=np.uint8)
    except (UnidentifiedImageError, OSError) as exc:
        raise ValueError(f"cannot decode image {path.name}: {exc}") from exc
    return arr.astype(np.float32) / 255.0


def ingest(path, target: int) -> ImageFolder:
    """Load every PNG/JPEG in ``path`` (sorted by filename), as target x target RGB."""
    root = Path(path)
    if not root.is_dir():
        raise ValueError(f"image folder {root} does not exist")
    files = sorted(p for p in root.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not files:
        raise ValueError(f"no PNG or JPEG images in {root}")
    folder = ImageFolder(path=root, target=target)
    for f in files:
        folder.names.append(f.name)
        folder.images.append(load_image(f, target))
    return folder


def save_png(img, path) -> None:
    """Write an H x W x C image in [0, 1] as an 8-bit PNG."""
    arr = to_array(img)
    u8 = np.round(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)
    if u8.shape[2] == 1:
        u8 = u8[..., 0]
    PILImage.fromarray(u8).save(path, format="PNG")


def to_tensor(img) -> torch.Tensor:
    """H x W x C array -> 1 x C x H x W float32 tensor."""
    arr = np.asarray(img, dtype=np.float32)
    if arr.ndim == 2:
        arr = arr[..., None]
    return torch.from_numpy(np.ascontiguousarray(arr.transpose(2, 0, 1)))[None]


def to_array(x) -> np.ndarray:
    """1 x C x H x W tensor (or H x W x C array) -> H x W x C float array."""
    if isinstance(x, torch.Tensor):
        t = x.detach().cpu()
        if t.ndim == 4:
            if t.shape[0] != 1:
                raise ValueError("expected a single image")
            t = t[0]
        return t.permute(1, 2, 0).numpy()
    return np.asarray(x)


def quantize(x: torch.Tensor) -> torch.Tensor:
    """Snap to 8-bit levels, as if written to and read back from a PNG."""
    return torch.round(x.clamp(0.0, 1.0) * 255.0) / 255.0
