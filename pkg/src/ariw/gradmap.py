"""Per-pixel embedding strength from image gradients."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import torch
import torch.nn.functional as F

G_FLOOR = 0.1

__all__ = ["G_FLOOR", "GradMode", "raw_gradient", "sobel_magnitude", "normalize", "modulate", "gradient_map"]


@dataclass(frozen=True)
class GradMode:
    mode: str = "autodiff"
    enabled: bool = True

    def __post_init__(self):
        if self.mode not in ("autodiff", "sobel"):
            raise ValueError(f"gradient mode must be 'autodiff' or 'sobel', got {self.mode!r}")

    @classmethod
    def parse(cls, text: str) -> "GradMode":
        """``autodiff``, ``sobel`` or ``off``."""
        text = text.strip().lower()
        if text == "off":
            return cls(enabled=False)
        return cls(mode=text)

    def __str__(self) -> str:
        return self.mode if self.enabled else "off"


def sobel_magnitude(image: torch.Tensor) -> torch.Tensor:
    """Per-channel sqrt(Gx^2 + Gy^2) of 3 x 3 Sobel responses, replicate border.

    Written as separable differences rather than a convolution so that flat
    regions give exactly zero.
    """
    p = F.pad(image, (1, 1, 1, 1), mode="replicate")
    dx = p[..., :, 2:] - p[..., :, :-2]
    dy = p[..., 2:, :] - p[..., :-2, :]
    gx = dx[..., :-2, :] + 2 * dx[..., 1:-1, :] + dx[..., 2:, :]
    gy = dy[..., :, :-2] + 2 * dy[..., :, 1:-1] + dy[..., :, 2:]
    return torch.sqrt(gx * gx + gy * gy)


def raw_gradient(
    image: torch.Tensor,
    encoder_fn: Optional[Callable[[torch.Tensor], torch.Tensor]] = None,
    mode: GradMode = GradMode(),
) -> torch.Tensor:
    """Unnormalised gradient magnitude for an N x C x H x W image.

    In autodiff mode this is |d s / d X| with s the sum of ``encoder_fn(X)``.
    The result never carries a graph.
    """
    if mode.mode == "sobel":
        with torch.no_grad():
            return sobel_magnitude(image)
    if encoder_fn is None:
        raise ValueError("autodiff gradient mode needs a differentiable encoder function")
    with torch.enable_grad():
        x = image.detach().clone().requires_grad_(True)
        out = encoder_fn(x)
        if not out.requires_grad:
            raise ValueError("encoder function output does not depend differentiably on the image")
        (grad,) = torch.autograd.grad(out.sum(), x)
    return grad.abs()


def normalize(raw: torch.Tensor, floor: float = G_FLOOR) -> torch.Tensor:
    """Min-max rescale each image in the batch to [floor, 1]; flat input gives all ones."""
    flat = raw.reshape(raw.shape[0], -1)
    lo = flat.min(dim=1).values.view(-1, *([1] * (raw.ndim - 1)))
    hi = flat.max(dim=1).values.view(-1, *([1] * (raw.ndim - 1)))
    span = hi - lo
    degenerate = span < 1e-8
    scaled = floor + (1.0 - floor) * (raw - lo) / torch.where(degenerate, torch.ones_like(span), span)
    return torch.where(degenerate, torch.ones_like(raw), scaled)


def modulate(residual: torch.Tensor, g: torch.Tensor) -> torch.Tensor:
    if residual.shape != g.shape:
        raise ValueError(f"residual {tuple(residual.shape)} and gradient map {tuple(g.shape)} differ")
    return g * residual


def gradient_map(
    image: torch.Tensor,
    encoder_fn: Optional[Callable[[torch.Tensor], torch.Tensor]] = None,
    mode: GradMode = GradMode(),
) -> torch.Tensor:
    """Normalised strength map; all ones when the mode is disabled."""
    if not mode.enabled:
        return torch.ones_like(image)
    return normalize(raw_gradient(image, encoder_fn, mode))
