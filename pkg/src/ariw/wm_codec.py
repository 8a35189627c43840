"""Payload preprocessing: bit projection, spatial expansion and hex serialization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .tensor_core import RngStream, resize_nchw

__all__ = [
    "ExpandConfig",
    "WatermarkProjection",
    "project",
    "expand",
    "check_bits",
    "bits_to_hex",
    "hex_to_bits",
]


@dataclass(frozen=True)
class ExpandConfig:
    """Shape plan taking L bits to an H x W x C spatial watermark.

    The projected vector of length ``L1 = grid_h * grid_w * grid_c`` is
    reshaped row-major to grid_h x grid_w x grid_c and each grid cell is
    repeated over an ``up_factor`` x ``up_factor`` block.
    """

    L: int
    L1: int
    grid_h: int
    grid_w: int
    grid_c: int
    up_factor: int

    def __post_init__(self):
        if min(self.L, self.L1, self.grid_h, self.grid_w, self.grid_c, self.up_factor) < 1:
            raise ValueError(f"all ExpandConfig fields must be positive: {self}")
        if self.grid_h * self.grid_w * self.grid_c != self.L1:
            raise ValueError(
                f"grid {self.grid_h}x{self.grid_w}x{self.grid_c} does not hold L1={self.L1} values"
            )

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return (self.grid_h * self.up_factor, self.grid_w * self.up_factor, self.grid_c)

    @classmethod
    def for_image(cls, height: int, width: int, channels: int, L: int, up_factor: int = 8) -> "ExpandConfig":
        """Plan for an image size; the 400 x 400 x 3 default gives a 50 x 50 x 3 grid."""
        if height % up_factor or width % up_factor:
            raise ValueError(
                f"image {height}x{width} is not divisible by the upsampling factor {up_factor}"
            )
        gh, gw = height // up_factor, width // up_factor
        return cls(L=L, L1=gh * gw * channels, grid_h=gh, grid_w=gw, grid_c=channels, up_factor=up_factor)

    def check_image(self, height: int, width: int, channels: int) -> None:
        if self.image_shape != (height, width, channels):
            raise ValueError(
                f"expansion plan produces {self.image_shape}, image is {(height, width, channels)}"
            )


class WatermarkProjection(nn.Module):
    """Trainable L -> L1 linear map; weights stored L x L1 so that out = bits @ W + b."""

    def __init__(self, L: int, L1: int, rng: RngStream | None = None, init_std: float = 0.02):
        super().__init__()
        rng = rng or RngStream(0, "init.projection")
        self.weight = nn.Parameter(rng.normal_tensor((L, L1), std=init_std))
        self.bias = nn.Parameter(torch.zeros(L1))

    def forward(self, bits: torch.Tensor) -> torch.Tensor:
        return project(bits, self.weight, self.bias)


def check_bits(bits, L: int | None = None) -> np.ndarray:
    arr = np.asarray(bits)
    if arr.ndim != 1:
        raise ValueError(f"bits must be a 1-D vector, got shape {arr.shape}")
    if not np.all((arr == 0) | (arr == 1)):
        raise ValueError("bits must contain only 0 and 1")
    if L is not None and arr.shape[0] != L:
        raise ValueError(f"expected {L} bits, got {arr.shape[0]}")
    return arr.astype(np.uint8)


def project(bits: torch.Tensor, weight: torch.Tensor, bias: torch.Tensor) -> torch.Tensor:
    """``bits @ weight + bias`` for a length-L vector or an N x L batch."""
    bits = torch.as_tensor(bits, dtype=weight.dtype)
    if weight.ndim != 2 or bias.shape != (weight.shape[1],):
        raise ValueError(
            f"projection weights must be L x L1 with bias L1, got {tuple(weight.shape)} / {tuple(bias.shape)}"
        )
    if bits.shape[-1] != weight.shape[0]:
        raise ValueError(f"got {bits.shape[-1]} bits for a projection expecting {weight.shape[0]}")
    return bits @ weight + bias


def expand(bits: torch.Tensor, cfg: ExpandConfig, projection: WatermarkProjection) -> torch.Tensor:
    """Spatial watermark for ``bits``; returns N x C x H x W (N = 1 for a single vector)."""
    bits = torch.as_tensor(bits, dtype=projection.weight.dtype)
    if bits.ndim == 1:
        bits = bits.unsqueeze(0)
    if bits.shape[-1] != cfg.L:
        raise ValueError(f"expected {cfg.L} bits, got {bits.shape[-1]}")
    v = projection(bits)
    if v.shape[-1] != cfg.L1:
        raise ValueError(f"projection emits {v.shape[-1]} values, plan expects L1={cfg.L1}")
    grid = v.reshape(-1, cfg.grid_h, cfg.grid_w, cfg.grid_c).permute(0, 3, 1, 2)
    h, w, _ = cfg.image_shape
    return resize_nchw(grid, h, w, mode="nearest")


def bits_to_hex(bits) -> str:
    """Lowercase hex, most significant bit first, ceil(L / 4) digits.

    Bits are right-aligned: a length that is not a multiple of four gets
    leading zero padding in the first digit.
    """
    arr = check_bits(bits)
    n_digits = -(-arr.shape[0] // 4)
    value = 0
    for b in arr:
        value = (value << 1) | int(b)
    return format(value, "x").zfill(n_digits) if n_digits else ""


def hex_to_bits(text: str, L: int) -> np.ndarray:
    """Inverse of :func:`bits_to_hex` for a payload of length ``L``."""
    text = text.strip().lower()
    if text.startswith("0x"):
        text = text[2:]
    n_digits = -(-L // 4)
    if len(text) != n_digits:
        raise ValueError(f"a {L}-bit payload needs {n_digits} hex digits, got {len(text)}")
    try:
        value = int(text, 16)
    except ValueError as exc:
        raise ValueError(f"not a hex string: {text!r}") from exc
    if value >> L:
        raise ValueError(f"hex value {text!r} does not fit in {L} bits")
    return np.array([(value >> (L - 1 - i)) & 1 for i in range(L)], dtype=np.uint8)
