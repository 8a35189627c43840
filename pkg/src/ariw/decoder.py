"""Payload decoder.

Each transposed-convolution layer has a decouple head that reads a 3-channel
watermark map off that layer's features.  The maps are bounded with tanh,
resampled to a common grid, fused by element-wise sum and product across
layers, and a dense layer with a sigmoid turns the fused maps into bit
probabilities.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .tensor_core import RngStream, resize_nchw

__all__ = ["Decoder", "decode_layer_maps", "aggregate", "extract", "hard_bits"]

LEAKY_SLOPE = 0.2


class Decoder(nn.Module):
    def __init__(
        self,
        L: int,
        grid: int,
        channels: Sequence[int] = (64, 128, 64, 32),
        kernel_size: int = 3,
        image_channels: int = 3,
        rng: Optional[RngStream] = None,
    ):
        super().__init__()
        rng = rng or RngStream(0, "init.weights")
        self.L = L
        self.grid = grid
        pad = kernel_size // 2
        self.layers = nn.ModuleList()
        self.heads = nn.ModuleList()
        cin = image_channels
        for i, cout in enumerate(channels):
            layer = nn.ConvTranspose2d(cin, cout, kernel_size, stride=1, padding=pad)
            head = nn.Conv2d(cout, 3, kernel_size, padding=pad)
            with torch.no_grad():
                std = np.sqrt(2.0 / ((1 + LEAKY_SLOPE**2) * cin * kernel_size**2))
                layer.weight.copy_(rng.child(f"decoder.layer{i}").normal_tensor(layer.weight.shape, std=std))
                layer.bias.zero_()
                std = np.sqrt(1.0 / (cout * kernel_size**2))
                head.weight.copy_(rng.child(f"decoder.head{i}").normal_tensor(head.weight.shape, std=std))
                head.bias.zero_()
            self.layers.append(layer)
            self.heads.append(head)
            cin = cout
        n_feat = 2 * 3 * grid * grid
        self.dense = nn.Linear(n_feat, L)
        with torch.no_grad():
            self.dense.weight.copy_(
                rng.child("decoder.dense").normal_tensor(self.dense.weight.shape, std=1.0 / np.sqrt(n_feat))
            )
            self.dense.bias.zero_()

    @property
    def depth(self) -> int:
        return len(self.layers)

    def layer_maps(self, img: torch.Tensor) -> list:
        h = img
        maps = []
        for layer, head in zip(self.layers, self.heads):
            h = F.leaky_relu(layer(h), LEAKY_SLOPE)
            m = torch.tanh(head(h))
            maps.append(resize_nchw(m, self.grid, self.grid, mode="bilinear", antialias=True))
        return maps

    def forward(self, img: torch.Tensor) -> torch.Tensor:
        return aggregate(self.layer_maps(img), self.dense)


def decode_layer_maps(img: torch.Tensor, params: Decoder) -> list:
    """One grid x grid x 3 map per decoder layer (batched: N x 3 x r x r)."""
    if img.ndim != 4 or img.shape[1] != params.layers[0].in_channels:
        raise ValueError(f"decoder expects N x {params.layers[0].in_channels} x H x W, got {tuple(img.shape)}")
    return params.layer_maps(img)


def aggregate(maps: Sequence[torch.Tensor], dense: nn.Linear) -> torch.Tensor:
    """Sigmoid of the dense layer applied to [flat(sum of maps), flat(product of maps)]."""
    if len(maps) < 1:
        raise ValueError("aggregation needs at least one map")
    total = maps[0]
    prod = maps[0]
    for m in maps[1:]:
        total = total + m
        prod = prod * m
    n = total.shape[0]
    feats = torch.cat([total.reshape(n, -1), prod.reshape(n, -1)], dim=1)
    return torch.sigmoid(dense(feats))


def hard_bits(soft: torch.Tensor) -> np.ndarray:
    """Threshold at 0.5; exactly 0.5 decodes to 1."""
    return (soft.detach().cpu().numpy() >= 0.5).astype(np.uint8)


def extract(img: torch.Tensor, model) -> tuple[torch.Tensor, np.ndarray]:
    """Soft bit probabilities and hard bits for a batch of images."""
    model.check_image(img)
    with torch.no_grad():
        soft = model.decoder(img)
    return soft, hard_bits(soft)
