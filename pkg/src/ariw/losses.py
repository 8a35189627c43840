"""Differentiable training losses."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import torch

from .config import LossWeights
from .metrics import PSNR_CAP

__all__ = ["BCE_EPS", "LossWeights", "LossBreakdown", "psnr_t", "bce", "compute_losses"]

BCE_EPS = 1e-7
_PEAK = 255.0


def psnr_t(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Differentiable PSNR (0-255 scale, 100 dB cap)."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {tuple(a.shape)} vs {tuple(b.shape)}")
    mse = ((a - b) * _PEAK).pow(2).mean()
    mse = mse.clamp(min=_PEAK**2 * 1e-10)
    return (10.0 * torch.log10(_PEAK**2 / mse)).clamp(max=PSNR_CAP)


def bce(soft: torch.Tensor, truth: torch.Tensor) -> torch.Tensor:
    """Binary cross-entropy averaged over the payload (and the batch)."""
    if soft.shape != truth.shape:
        raise ValueError(f"prediction {tuple(soft.shape)} and payload {tuple(truth.shape)} differ")
    p = soft.clamp(BCE_EPS, 1.0 - BCE_EPS)
    t = truth.to(p.dtype)
    return -(t * torch.log(p) + (1.0 - t) * torch.log(1.0 - p)).mean()


@dataclass
class LossBreakdown:
    l1_mse: torch.Tensor
    l2_inv_psnr: torch.Tensor
    l3_global_ce: torch.Tensor
    l4_local_ce_sum: torch.Tensor
    per_branch_ce: torch.Tensor
    total: torch.Tensor

    def terms(self) -> dict:
        return {
            "l1": float(self.l1_mse.detach()),
            "l2": float(self.l2_inv_psnr.detach()),
            "l3": float(self.l3_global_ce.detach()),
            "l4": float(self.l4_local_ce_sum.detach()),
            "total": float(self.total.detach()),
        }

    def check_finite(self) -> None:
        for name, v in self.terms().items():
            if not math.isfinite(v):
                raise FloatingPointError(f"non-finite loss term {name} = {v}")


def compute_losses(
    cover: torch.Tensor,
    wm_img: torch.Tensor,
    soft_global: torch.Tensor,
    soft_branches: Sequence[torch.Tensor],
    truth: torch.Tensor,
    weights: LossWeights = LossWeights(),
) -> LossBreakdown:
    if cover.shape != wm_img.shape:
        raise ValueError(f"cover {tuple(cover.shape)} and watermarked {tuple(wm_img.shape)} differ")
    truth = torch.as_tensor(truth).to(soft_global.dtype).reshape(soft_global.shape)
    l1 = (wm_img - cover).pow(2).mean()
    l2 = 1.0 / psnr_t(cover, wm_img)
    l3 = bce(soft_global, truth)
    if len(soft_branches):
        per_branch = torch.stack([bce(s, truth.expand_as(s)) for s in soft_branches])
    else:
        per_branch = torch.zeros(0, dtype=l3.dtype)
    l4 = per_branch.sum()
    lam = weights
    total = lam.mse * l1 + lam.inv_psnr * l2 + lam.global_ce * l3 + lam.local_ce * l4
    return LossBreakdown(l1, l2, l3, l4, per_branch, total)
