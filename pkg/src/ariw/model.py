"""All trainable parameters of one watermarking model, plus its frozen robust weights."""

from __future__ import annotations

import hashlib

import numpy as np
import torch
from torch import nn

from .config import TrainConfig
from .decoder import Decoder
from .encoder import Encoder, gradient_for
from .tensor_core import RngStream
from .wm_codec import ExpandConfig, WatermarkProjection, expand

__all__ = ["ARIWModel"]


class ARIWModel(nn.Module):
    def __init__(self, config: TrainConfig):
        super().__init__()
        self.config = config
        rng = RngStream(config.seed, "init.weights")
        self.expand_cfg = ExpandConfig.for_image(
            config.image_size, config.image_size, 3, config.L, config.up_factor
        )
        self.projection = WatermarkProjection(config.L, self.expand_cfg.L1, rng.child("projection"))
        self.encoder = Encoder(
            n_branches=len(config.attack_suite),
            channels=config.channels,
            kernel_size=config.kernel_size,
            head_hidden=config.head_hidden,
            rng=rng,
        )
        self.decoder = Decoder(
            L=config.L,
            grid=config.grid,
            channels=tuple(reversed(config.channels)),
            kernel_size=config.kernel_size,
            rng=rng,
        )
        n = len(config.attack_suite)
        self.register_buffer("robust_weights", torch.full((n,), 1.0 / n, dtype=torch.float64))

    @property
    def n_branches(self) -> int:
        return self.encoder.n_branches

    def check_image(self, img: torch.Tensor) -> None:
        h, w, c = self.expand_cfg.image_shape
        if img.ndim != 4 or tuple(img.shape[1:]) != (c, h, w):
            raise ValueError(f"model expects N x {c} x {h} x {w} images, got {tuple(img.shape)}")

    def expand(self, bits: torch.Tensor) -> torch.Tensor:
        return expand(bits, self.expand_cfg, self.projection)

    def gradient_map(self, cover: torch.Tensor, wm: torch.Tensor, weights=None) -> torch.Tensor:
        weights = self.robust_weights if weights is None else weights
        return gradient_for(cover, wm.detach(), self.encoder, weights, self.config.grad_mode)

    def named_arrays(self) -> dict:
        """name -> float32 numpy array for every parameter and buffer, in a fixed order."""
        out = {}
        for name, t in self.state_dict().items():
            out[name] = t.detach().cpu().numpy()
        return out

    def parameter_digest(self) -> str:
        h = hashlib.sha256()
        for name, arr in self.named_arrays().items():
            h.update(name.encode())
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()
