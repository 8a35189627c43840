"""Deterministic tensor and image primitives.

Spatial primitives here follow the H x W x C layout (kernels are
k x k x Cin x Cout) and accept numpy arrays or torch tensors.  The networks
work on batched N x C x H x W torch tensors and use the ``*_nchw`` helpers
directly, which avoids a layout round trip on every layer.
"""

from __future__ import annotations

import hashlib
from typing import Literal, Union

import numpy as np
import torch
import torch.nn.functional as F

ArrayLike = Union[np.ndarray, torch.Tensor]

__all__ = [
    "RngStream",
    "conv2d",
    "transposed_conv2d",
    "resize",
    "resize_nchw",
    "ste_clamp",
    "ste_round",
    "to_nchw",
    "to_hwc",
]


def _as_tensor(x: ArrayLike) -> tuple[torch.Tensor, bool]:
    if isinstance(x, torch.Tensor):
        return x, False
    return torch.as_tensor(np.asarray(x, dtype=np.float64)), True


def _back(x: torch.Tensor, was_numpy: bool) -> ArrayLike:
    return x.detach().cpu().numpy() if was_numpy else x


def to_nchw(img: torch.Tensor) -> torch.Tensor:
    """H x W x C -> 1 x C x H x W."""
    if img.ndim != 3:
        raise ValueError(f"expected an H x W x C image, got shape {tuple(img.shape)}")
    return img.permute(2, 0, 1).unsqueeze(0)


def to_hwc(x: torch.Tensor) -> torch.Tensor:
    """1 x C x H x W -> H x W x C."""
    if x.ndim != 4 or x.shape[0] != 1:
        raise ValueError(f"expected a 1 x C x H x W tensor, got shape {tuple(x.shape)}")
    return x[0].permute(1, 2, 0)


def _kernel_oihw(kernel: torch.Tensor) -> torch.Tensor:
    if kernel.ndim != 4:
        raise ValueError(f"kernel must be k x k x Cin x Cout, got shape {tuple(kernel.shape)}")
    if kernel.shape[0] != kernel.shape[1] or kernel.shape[0] % 2 == 0:
        raise ValueError(f"kernel must be square with odd size, got {tuple(kernel.shape[:2])}")
    return kernel.permute(3, 2, 0, 1)


def conv2d(
    x: ArrayLike,
    kernel: ArrayLike,
    stride: int = 1,
    padding: Literal["same", "valid"] = "same",
) -> ArrayLike:
    """2-D cross-correlation of an H x W x Cin input with a k x k x Cin x Cout kernel.

    ``same`` pads symmetrically by k // 2 with zeros, so the output is
    ceil(H / stride) x ceil(W / stride).
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    xt, was_np = _as_tensor(x)
    kt, _ = _as_tensor(kernel)
    kt = kt.to(xt.dtype)
    if xt.ndim != 3:
        raise ValueError(f"input must be H x W x C, got shape {tuple(xt.shape)}")
    w = _kernel_oihw(kt)
    if w.shape[1] != xt.shape[2]:
        raise ValueError(
            f"channel mismatch: input has {xt.shape[2]} channels, kernel expects {w.shape[1]}"
        )
    if padding == "same":
        pad = w.shape[-1] // 2
    elif padding == "valid":
        pad = 0
    else:
        raise ValueError(f"unknown padding {padding!r}")
    out = F.conv2d(to_nchw(xt), w, stride=stride, padding=pad)
    return _back(to_hwc(out), was_np)


def transposed_conv2d(x: ArrayLike, kernel: ArrayLike, stride: int = 1) -> ArrayLike:
    """Adjoint of :func:`conv2d` with ``same`` padding and the same kernel.

    ``kernel`` is given in the forward layout k x k x Cout x Cin, i.e. the
    kernel of the convolution this operator transposes, so the input here
    carries the forward convolution's output channels (the last kernel axis).
    The output is (H * stride) x (W * stride) x Cin.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    xt, was_np = _as_tensor(x)
    kt, _ = _as_tensor(kernel)
    kt = kt.to(xt.dtype)
    if xt.ndim != 3:
        raise ValueError(f"input must be H x W x C, got shape {tuple(xt.shape)}")
    w = _kernel_oihw(kt)  # (Cfwd_out, Cfwd_in, k, k) is exactly conv_transpose2d's layout
    if w.shape[0] != xt.shape[2]:
        raise ValueError(
            f"channel mismatch: input has {xt.shape[2]} channels, kernel expects {w.shape[0]}"
        )
    pad = w.shape[-1] // 2
    # output_padding restores the in*stride size that symmetric padding trims off
    k = w.shape[-1]
    h, wd = xt.shape[0], xt.shape[1]
    out_pad = [s * stride - ((s - 1) * stride - 2 * pad + k) for s in (h, wd)]
    if any(p < 0 or p >= stride for p in out_pad):
        raise ValueError(f"kernel size {k} incompatible with stride {stride}")
    out = F.conv_transpose2d(to_nchw(xt), w, stride=stride, padding=pad, output_padding=tuple(out_pad))
    return _back(to_hwc(out), was_np)


def resize_nchw(
    x: torch.Tensor,
    out_h: int,
    out_w: int,
    mode: Literal["nearest", "bilinear"] = "bilinear",
    antialias: bool = False,
) -> torch.Tensor:
    """Half-pixel-centre resize of an N x C x H x W tensor (no clamping)."""
    if out_h < 1 or out_w < 1:
        raise ValueError("output size must be >= 1")
    if x.shape[-2:] == (out_h, out_w):
        return x
    if mode == "nearest":
        return F.interpolate(x, size=(out_h, out_w), mode="nearest-exact")
    if mode == "bilinear":
        aa = antialias and (out_h < x.shape[-2] or out_w < x.shape[-1])
        return F.interpolate(x, size=(out_h, out_w), mode="bilinear", align_corners=False, antialias=aa)
    raise ValueError(f"unknown resize mode {mode!r}")


def resize(
    img: ArrayLike,
    out_h: int,
    out_w: int,
    mode: Literal["nearest", "bilinear"] = "bilinear",
) -> ArrayLike:
    """Resize an H x W x C image; the result is clamped to [0, 1]."""
    xt, was_np = _as_tensor(img)
    if xt.ndim != 3:
        raise ValueError(f"image must be H x W x C, got shape {tuple(xt.shape)}")
    out = resize_nchw(to_nchw(xt), out_h, out_w, mode)
    return _back(to_hwc(out).clamp(0.0, 1.0), was_np)


def ste_round(x: torch.Tensor) -> torch.Tensor:
    """Round in the forward pass, identity gradient in the backward pass."""
    return x + (torch.round(x) - x).detach()


def ste_clamp(x: torch.Tensor, lo: float = 0.0, hi: float = 1.0) -> torch.Tensor:
    """Clamp in the forward pass, identity gradient in the backward pass."""
    return x + (x.clamp(lo, hi) - x).detach()


class RngStream:
    """Counter-based random stream keyed by ``(seed, stream_id)``.

    Two streams built from the same key yield the same draws regardless of
    what other streams were used before, so attacks and initialisation are
    reproducible independent of execution order.
    """

    def __init__(self, seed: int, stream_id: str):
        self.seed = int(seed)
        self.stream_id = str(stream_id)
        digest = hashlib.blake2b(
            f"{self.seed}:{self.stream_id}".encode(), digest_size=16
        ).digest()
        key = int.from_bytes(digest, "little")
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def child(self, suffix: str) -> "RngStream":
        return RngStream(self.seed, f"{self.stream_id}.{suffix}")

    def uniform(self, size=None, low: float = 0.0, high: float = 1.0):
        return self._gen.uniform(low, high, size)

    def normal(self, size=None, std: float = 1.0):
        return self._gen.normal(0.0, std, size)

    def integers(self, low: int, high: int, size=None):
        """Integers in ``[low, high)``."""
        return self._gen.integers(low, high, size)

    def bits(self, n: int) -> np.ndarray:
        return self._gen.integers(0, 2, n).astype(np.uint8)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def normal_tensor(self, shape, std: float = 1.0, dtype=torch.float32) -> torch.Tensor:
        return torch.from_numpy(self.normal(tuple(shape), std)).to(dtype)

    def uniform_tensor(self, shape, dtype=torch.float32) -> torch.Tensor:
        return torch.from_numpy(self.uniform(tuple(shape))).to(dtype)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id!r})"
