"""Distortion simulation.

Every attack takes batched N x C x H x W tensors in [0, 1].  The
differentiable flavour uses straight-through rounding and clamping so it can
sit inside the training graph; the faithful flavour rounds for real and
returns 8-bit pixel levels for JPEG.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
import torch
import torch.nn.functional as F

from .tensor_core import RngStream, resize_nchw, ste_clamp, ste_round

__all__ = [
    "ATTACK_KINDS",
    "AttackSpec",
    "AttackSuite",
    "QuantTables",
    "jpeg_quant_tables",
    "jpeg",
    "gaussian_kernel",
    "apply_attack",
    "crop_side",
]

ATTACK_KINDS = ("identity", "jpeg", "gauss_noise", "gauss_blur", "crop", "cropout", "dropout", "scale")
NEEDS_COVER = ("cropout", "dropout")

# ITU-T T.81 Annex K base tables
_BASE_LUMA = np.array(
    [
        [16, 11, 10, 16, 24, 40, 51, 61],
        [12, 12, 14, 19, 26, 58, 60, 55],
        [14, 13, 16, 24, 40, 57, 69, 56],
        [14, 17, 22, 29, 51, 87, 80, 62],
        [18, 22, 37, 56, 68, 109, 103, 77],
        [24, 35, 55, 64, 81, 104, 113, 92],
        [49, 64, 78, 87, 103, 121, 120, 101],
        [72, 92, 95, 98, 112, 100, 103, 99],
    ],
    dtype=np.int64,
)
_BASE_CHROMA = np.full((8, 8), 99, dtype=np.int64)
_BASE_CHROMA[:4, :4] = [[17, 18, 24, 47], [18, 21, 26, 66], [24, 26, 56, 99], [47, 66, 99, 99]]


@dataclass(frozen=True)
class AttackSpec:
    kind: str
    param: float = 0.0
    differentiable: bool = True

    def __post_init__(self):
        k, p = self.kind, self.param
        if k not in ATTACK_KINDS:
            raise ValueError(f"unknown attack kind {k!r}; expected one of {ATTACK_KINDS}")
        if k == "jpeg" and not (1 <= p <= 100 and float(p).is_integer()):
            raise ValueError(f"jpeg quality factor must be an integer in [1, 100], got {p}")
        if k == "gauss_noise" and not p > 0:
            raise ValueError(f"gauss_noise variance must be positive, got {p}")
        if k == "gauss_blur" and not (p >= 3 and float(p).is_integer() and int(p) % 2 == 1):
            raise ValueError(f"gauss_blur kernel size must be an odd integer >= 3, got {p}")
        if k in ("crop", "cropout", "dropout", "scale") and not 0 < p <= 1:
            raise ValueError(f"{k} parameter must lie in (0, 1], got {p}")

    @classmethod
    def parse(cls, text: str, differentiable: bool = True) -> "AttackSpec":
        """``kind`` or ``kind:param``, e.g. ``jpeg:50``."""
        kind, _, param = text.strip().partition(":")
        return cls(kind.strip(), float(param) if param else 0.0, differentiable)

    @property
    def label(self) -> str:
        if self.kind == "identity":
            return "identity"
        return f"{self.kind}:{self.param:g}"

    def faithful(self) -> "AttackSpec":
        return replace(self, differentiable=False)


class AttackSuite(tuple):
    """Ordered attack branches; the position of a spec is its branch index."""

    def __new__(cls, specs: Sequence[AttackSpec]):
        specs = tuple(specs)
        if not specs:
            raise ValueError("an attack suite needs at least one attack")
        keys = [(s.kind, s.param) for s in specs]
        if len(set(keys)) != len(keys):
            raise ValueError(f"duplicate attacks in suite: {[s.label for s in specs]}")
        return super().__new__(cls, specs)

    @classmethod
    def full_default(cls) -> "AttackSuite":
        return cls.parse(
            "identity, jpeg:50, gauss_noise:0.02, gauss_blur:7, crop:0.03, cropout:0.9, dropout:0.9, scale:0.5"
        )

    @classmethod
    def desk_default(cls) -> "AttackSuite":
        return cls.parse("identity, jpeg:50, gauss_noise:0.02, gauss_blur:3, dropout:0.9, scale:0.5")

    @classmethod
    def parse(cls, text: str, differentiable: bool = True) -> "AttackSuite":
        return cls([AttackSpec.parse(t, differentiable) for t in text.split(",") if t.strip()])

    def faithful(self) -> "AttackSuite":
        return AttackSuite([s.faithful() for s in self])

    def __str__(self) -> str:
        return ", ".join(s.label for s in self)


@dataclass(frozen=True)
class QuantTables:
    luma: np.ndarray
    chroma: np.ndarray


def jpeg_quant_tables(qf: int) -> QuantTables:
    """IJG quality scaling of the Annex K tables."""
    if not (1 <= qf <= 100) or int(qf) != qf:
        raise ValueError(f"quality factor must be an integer in [1, 100], got {qf}")
    qf = int(qf)
    scale = 5000 // qf if qf < 50 else 200 - 2 * qf

    def scaled(base):
        return np.clip((base * scale + 50) // 100, 1, 255)

    return QuantTables(luma=scaled(_BASE_LUMA), chroma=scaled(_BASE_CHROMA))


def _dct_matrix(dtype) -> torch.Tensor:
    n = np.arange(8)
    m = np.cos((2 * n[None, :] + 1) * n[:, None] * np.pi / 16) * np.sqrt(2 / 8)
    m[0] /= np.sqrt(2)
    return torch.from_numpy(m).to(dtype)


_RGB2YCC = np.array([[0.299, 0.587, 0.114], [-0.168736, -0.331264, 0.5], [0.5, -0.418688, -0.081312]])


def jpeg(x: torch.Tensor, qf: int, differentiable: bool = True) -> torch.Tensor:
    """JPEG without chroma subsampling or entropy coding (lossless stages skipped)."""
    n, c, h, w = x.shape
    if c not in (1, 3):
        raise ValueError(f"jpeg expects 1 or 3 channels, got {c}")
    dt = x.dtype
    tables = jpeg_quant_tables(qf)
    rnd = ste_round if differentiable else torch.round
    v = x * 255.0
    if c == 3:
        m = torch.from_numpy(_RGB2YCC).to(dt)
        v = torch.einsum("ij,njhw->nihw", m, v)
        v = v + torch.tensor([0.0, 128.0, 128.0], dtype=dt).view(1, 3, 1, 1)
        q = torch.from_numpy(np.stack([tables.luma, tables.chroma, tables.chroma])).to(dt)
    else:
        q = torch.from_numpy(tables.luma[None]).to(dt)
    ph, pw = (-h) % 8, (-w) % 8
    if ph or pw:
        v = F.pad(v, (0, pw, 0, ph), mode="replicate")
    hh, ww = v.shape[-2:]
    blocks = (v - 128.0).view(n, c, hh // 8, 8, ww // 8, 8).permute(0, 1, 2, 4, 3, 5)
    d = _dct_matrix(dt)
    coef = d @ blocks @ d.t()
    qv = q.view(1, c, 1, 1, 8, 8)
    coef = rnd(coef / qv) * qv
    blocks = d.t() @ coef @ d
    v = blocks.permute(0, 1, 2, 4, 3, 5).reshape(n, c, hh, ww)[..., :h, :w] + 128.0
    if c == 3:
        v = v - torch.tensor([0.0, 128.0, 128.0], dtype=dt).view(1, 3, 1, 1)
        minv = torch.from_numpy(np.linalg.inv(_RGB2YCC)).to(dt)
        v = torch.einsum("ij,njhw->nihw", minv, v)
    if not differentiable:
        return torch.round(v.clamp(0.0, 255.0)) / 255.0
    return ste_clamp(v / 255.0)


def gaussian_kernel(k: int, dtype=torch.float64) -> torch.Tensor:
    """Normalised k x k Gaussian with sigma = 0.3 * ((k - 1) / 2 - 1) + 0.8."""
    sigma = 0.3 * ((k - 1) / 2 - 1) + 0.8
    t = np.arange(k, dtype=np.float64) - (k - 1) / 2
    g = np.exp(-(t**2) / (2 * sigma**2))
    g /= g.sum()
    return torch.from_numpy(np.outer(g, g)).to(dtype)


def crop_side(p: float, h: int, w: int) -> int:
    area = p * h * w
    if area < 1:
        raise ValueError(f"crop keeps p*H*W = {area:.3g} < 1 pixel")
    return min(math.isqrt(math.floor(area + 1e-9)), h, w)


def _box_mask(n, h, w, bh, bw, rng: RngStream, dtype) -> torch.Tensor:
    mask = torch.zeros(n, 1, h, w, dtype=dtype)
    tops = rng.integers(0, h - bh + 1, n)
    lefts = rng.integers(0, w - bw + 1, n)
    for i, (t, l) in enumerate(zip(tops, lefts)):
        mask[i, :, t : t + bh, l : l + bw] = 1.0
    return mask


def apply_attack(
    wm: torch.Tensor,
    cover: Optional[torch.Tensor],
    spec: AttackSpec,
    rng: Optional[RngStream] = None,
) -> torch.Tensor:
    """Distort a batch of watermarked images; every image gets its own draws from ``rng``."""
    if wm.ndim != 4:
        raise ValueError(f"expected N x C x H x W, got shape {tuple(wm.shape)}")
    kind, p = spec.kind, spec.param
    if kind in NEEDS_COVER:
        if cover is None:
            raise ValueError(f"{kind} attack needs the cover image")
        if cover.shape != wm.shape:
            raise ValueError(f"cover {tuple(cover.shape)} and watermarked {tuple(wm.shape)} differ")
    if rng is None:
        rng = RngStream(0, f"attack.{kind}")
    clamp = ste_clamp if spec.differentiable else (lambda t: t.clamp(0.0, 1.0))
    n, c, h, w = wm.shape

    if kind == "identity":
        return wm
    if kind == "jpeg":
        return jpeg(wm, int(p), spec.differentiable)
    if kind == "gauss_noise":
        noise = rng.normal_tensor(wm.shape, std=math.sqrt(p), dtype=wm.dtype)
        return clamp(wm + noise)
    if kind == "gauss_blur":
        k = int(p)
        kern = gaussian_kernel(k, wm.dtype).expand(c, 1, k, k)
        padded = F.pad(wm, (k // 2,) * 4, mode="replicate")
        return clamp(F.conv2d(padded, kern, groups=c))
    if kind == "crop":
        s = crop_side(p, h, w)
        return wm * _box_mask(n, h, w, s, s, rng, wm.dtype)
    if kind == "cropout":
        bh = min(h, max(1, round(h * math.sqrt(p))))
        bw = min(w, max(1, round(w * math.sqrt(p))))
        keep = _box_mask(n, h, w, bh, bw, rng, wm.dtype).bool()
        return torch.where(keep, wm, cover)
    if kind == "dropout":
        keep = rng.uniform_tensor((n, 1, h, w), dtype=torch.float64) < p
        return torch.where(keep, wm, cover)
    if kind == "scale":
        sh, sw = max(1, math.floor(p * h)), max(1, math.floor(p * w))
        small = resize_nchw(wm, sh, sw, mode="bilinear")
        return clamp(resize_nchw(small, h, w, mode="bilinear"))
    raise AssertionError(kind)
