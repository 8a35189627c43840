"""Residual encoder with one output branch per attack type.

A shared convolutional trunk reads the current iteration state together with
the spatial watermark (re-attached before every layer), and a light head per
attack emits that attack's residual.  The residuals are mixed with softmax
robust weights and scaled by the gradient map and the embedding strength.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .gradmap import GradMode, gradient_map, modulate
from .tensor_core import RngStream

__all__ = [
    "INIT_KINDS",
    "InitState",
    "Encoder",
    "ResidualSet",
    "IterationState",
    "encode_branches",
    "robust_weights",
    "compose",
    "embed",
    "gradient_for",
]

INIT_KINDS = ("ones", "zeros", "cover", "gaussian")
LEAKY_SLOPE = 0.2


@dataclass(frozen=True)
class InitState:
    """Starting point of the residual iteration."""

    kind: str = "ones"

    def __post_init__(self):
        if self.kind not in INIT_KINDS:
            raise ValueError(f"init state must be one of {INIT_KINDS}, got {self.kind!r}")

    def realize(self, cover: torch.Tensor, rng: Optional[RngStream] = None) -> torch.Tensor:
        if self.kind == "ones":
            return torch.ones_like(cover)
        if self.kind == "zeros":
            return torch.zeros_like(cover)
        if self.kind == "cover":
            return cover.detach().clone()
        rng = rng or RngStream(0, "init.state")
        return rng.normal_tensor(cover.shape, dtype=cover.dtype)


@dataclass
class IterationState:
    k: int
    residual: torch.Tensor


@dataclass
class ResidualSet:
    branches: list
    weights: torch.Tensor
    composed: torch.Tensor
    alpha: float
    gradient: Optional[torch.Tensor] = None


def unit_rms(state: torch.Tensor, eps: float = 1e-8) -> torch.Tensor:
    """Rescale each tensor in the batch to unit root-mean-square (zero stays zero).

    Applied to both encoder inputs. The trunk is close to positively
    homogeneous, so an unnormalised state would have its size multiplied by a
    near-constant factor on every iteration, shrinking or blowing up the cached
    per-image state geometrically. The watermark is rescaled so the payload is
    not drowned by the state while the projection weights are still small.
    """
    rms = state.pow(2).mean(dim=(1, 2, 3), keepdim=True).sqrt()
    return state / rms.clamp_min(eps)


def he_normal(rng: RngStream, shape, fan_in: int, gain: float = 1.0) -> torch.Tensor:
    std = gain * np.sqrt(2.0 / ((1 + LEAKY_SLOPE**2) * fan_in))
    return rng.normal_tensor(shape, std=std)


class Encoder(nn.Module):
    """Shared trunk plus ``n_branches`` two-layer heads.

    The heads are stored fused: one convolution producing every head's
    hidden features and one grouped convolution giving each head its own
    linear output layer. Branch ``i`` owns output channels ``3i:3i+3``.
    """

    def __init__(
        self,
        n_branches: int,
        channels: Sequence[int] = (32, 64, 128, 64),
        kernel_size: int = 3,
        head_hidden: int = 16,
        image_channels: int = 3,
        rng: Optional[RngStream] = None,
    ):
        super().__init__()
        if kernel_size not in (1, 3, 5, 7):
            raise ValueError(f"encoder kernel size must be 1, 3, 5 or 7, got {kernel_size}")
        if n_branches < 1:
            raise ValueError("encoder needs at least one branch")
        rng = rng or RngStream(0, "init.weights")
        self.n_branches = n_branches
        self.kernel_size = kernel_size
        self.image_channels = c = image_channels
        pad = kernel_size // 2
        self.trunk = nn.ModuleList()
        cin = 2 * c
        for i, cout in enumerate(channels):
            conv = nn.Conv2d(cin, cout, kernel_size, padding=pad)
            self._init(conv, rng.child(f"encoder.trunk{i}"))
            self.trunk.append(conv)
            cin = cout + c
        self.head_hidden = nn.Conv2d(cin, n_branches * head_hidden, kernel_size, padding=pad)
        self._init(self.head_hidden, rng.child("encoder.head_hidden"))
        self.head_out = nn.Conv2d(
            n_branches * head_hidden, n_branches * c, kernel_size, padding=pad, groups=n_branches
        )
        self._init(self.head_out, rng.child("encoder.head_out"), gain=0.1)

    @staticmethod
    def _init(conv: nn.Conv2d, rng: RngStream, gain: float = 1.0) -> None:
        fan_in = conv.weight[0].numel()
        with torch.no_grad():
            conv.weight.copy_(he_normal(rng, conv.weight.shape, fan_in, gain))
            conv.bias.zero_()

    def forward(self, state: torch.Tensor, wm: torch.Tensor) -> list:
        if state.shape != wm.shape:
            raise ValueError(f"state {tuple(state.shape)} and watermark {tuple(wm.shape)} differ")
        if state.shape[1] != self.image_channels:
            raise ValueError(f"expected {self.image_channels} channels, got {state.shape[1]}")
        wm = unit_rms(wm)
        h = torch.cat([unit_rms(state), wm], dim=1)
        for conv in self.trunk:
            h = torch.cat([F.leaky_relu(conv(h), LEAKY_SLOPE), wm], dim=1)
        h = F.leaky_relu(self.head_hidden(h), LEAKY_SLOPE)
        out = self.head_out(h)
        return list(out.split(self.image_channels, dim=1))


def encode_branches(state: torch.Tensor, wm: torch.Tensor, params: Encoder) -> list:
    expected = state.shape[0]
    if wm.shape[0] != expected:
        wm = wm.expand(expected, *wm.shape[1:])
    return params(state, wm)


def robust_weights(scores) -> torch.Tensor:
    """Softmax over per-branch scores (higher score, larger share)."""
    s = torch.as_tensor(scores, dtype=torch.float64).flatten()
    if s.numel() == 0:
        raise ValueError("robust weights need at least one score")
    if not torch.isfinite(s).all():
        raise ValueError(f"non-finite branch scores: {s.tolist()}")
    return torch.softmax(s - s.max(), dim=0)


def compose(branches: Sequence[torch.Tensor], weights, g: torch.Tensor, alpha: float) -> torch.Tensor:
    """``alpha * sum_i w_i * (g * R_i)``; alpha is applied last so scaling is exact."""
    weights = torch.as_tensor(weights)
    if len(branches) != weights.numel():
        raise ValueError(f"{len(branches)} branches but {weights.numel()} weights")
    if abs(float(weights.sum()) - 1.0) > 1e-6:
        raise ValueError(f"robust weights must sum to 1, got {float(weights.sum())}")
    total = None
    for w, r in zip(weights.to(branches[0].dtype), branches):
        term = w * modulate(r, g)
        total = term if total is None else total + term
    return alpha * total


def embed(
    cover: torch.Tensor,
    bits,
    model,
    alpha: float = 1.0,
    iters: int = 2,
    init: InitState | str | None = None,
    rng: Optional[RngStream] = None,
    weights=None,
) -> tuple[torch.Tensor, ResidualSet]:
    """Watermark ``cover`` (N x C x H x W) with ``bits`` using the frozen robust weights.

    The residual iteration runs at unit strength; ``alpha`` scales only the
    residual that is finally added, so the output residual is linear in it.
    """
    if alpha < 0:
        raise ValueError(f"embedding strength must be non-negative, got {alpha}")
    if iters < 1:
        raise ValueError(f"need at least one iteration, got {iters}")
    model.check_image(cover)
    if init is None:
        init = InitState(model.config.init_kind)
    elif isinstance(init, str):
        init = InitState(init)
    weights = model.robust_weights if weights is None else torch.as_tensor(weights)
    bits = torch.as_tensor(np.asarray(bits), dtype=cover.dtype)
    with torch.no_grad():
        wm = model.expand(bits)
    state = init.realize(cover, rng)
    g = model.gradient_map(cover, wm, weights)
    with torch.no_grad():
        for _ in range(iters - 1):
            state = compose(encode_branches(state, wm, model.encoder), weights, g, 1.0)
        branches = encode_branches(state, wm, model.encoder)
        composed = compose(branches, weights, g, alpha)
        watermarked = (cover + composed).clamp(0.0, 1.0)
    return watermarked, ResidualSet(branches, weights, composed, alpha, g)


def gradient_for(cover: torch.Tensor, wm: torch.Tensor, encoder: Encoder, weights, mode: GradMode) -> torch.Tensor:
    """Strength map with the encoder run on the image itself as the differentiated function."""
    ones = torch.ones_like(cover)

    def encoder_fn(x):
        return compose(encode_branches(x, wm, encoder), weights, ones, 1.0)

    return gradient_map(cover, encoder_fn, mode)
