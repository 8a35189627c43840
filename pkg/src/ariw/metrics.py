"""Image quality and payload recovery metrics (numpy, H x W x C images in [0, 1])."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = ["PSNR_CAP", "psnr", "ssim", "bit_accuracy", "QualityConstraint"]

PSNR_CAP = 100.0
_PEAK = 255.0


def _as_image(x) -> np.ndarray:
    if hasattr(x, "detach"):
        x = x.detach().cpu().numpy()
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 2:
        a = a[..., None]
    return a


def psnr(a, b) -> float:
    """PSNR in dB on the 0-255 scale, capped at 100 dB."""
    a, b = _as_image(a), _as_image(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    mse = np.mean((_PEAK * a - _PEAK * b) ** 2)
    if mse < _PEAK**2 * 1e-10:
        return PSNR_CAP
    return float(min(PSNR_CAP, 10.0 * np.log10(_PEAK**2 / mse)))


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    t = np.arange(size) - (size - 1) / 2
    g = np.exp(-(t**2) / (2 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def ssim(a, b, win_size: int = 11, sigma: float = 1.5) -> float:
    """Mean SSIM over valid Gaussian-windowed positions, averaged over channels."""
    a, b = _as_image(a) * _PEAK, _as_image(b) * _PEAK
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if min(a.shape[:2]) < win_size:
        raise ValueError(f"images of size {a.shape[:2]} are smaller than the {win_size}x{win_size} window")
    c1, c2 = (0.01 * _PEAK) ** 2, (0.03 * _PEAK) ** 2
    win = _gaussian_window(win_size, sigma)

    def filt(x):
        return np.einsum("ijkl,kl->ij", sliding_window_view(x, (win_size, win_size)), win)

    vals = []
    for ch in range(a.shape[2]):
        x, y = a[..., ch], b[..., ch]
        mx, my = filt(x), filt(y)
        vx = filt(x * x) - mx * mx
        vy = filt(y * y) - my * my
        cxy = filt(x * y) - mx * my
        s = ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx**2 + my**2 + c1) * (vx + vy + c2))
        vals.append(s.mean())
    return float(np.mean(vals))


def bit_accuracy(pred, truth) -> float:
    p, t = np.asarray(pred).ravel(), np.asarray(truth).ravel()
    if p.shape != t.shape:
        raise ValueError(f"length mismatch {p.shape[0]} vs {t.shape[0]}")
    if p.size == 0:
        raise ValueError("empty payload")
    return float(np.mean(p == t))


@dataclass(frozen=True)
class QualityConstraint:
    """Predicate ``metric(...) > threshold`` on a cover/watermarked pair or on bits."""

    metric: str
    threshold: float

    def __post_init__(self):
        if self.metric not in ("psnr", "ssim", "bit_accuracy"):
            raise ValueError(f"unknown constraint metric {self.metric!r}")
        if not np.isfinite(self.threshold):
            raise ValueError("constraint threshold must be finite")

    def value(self, cover=None, watermarked=None, pred_bits=None, true_bits=None) -> float:
        if self.metric == "bit_accuracy":
            return bit_accuracy(pred_bits, true_bits)
        fn = psnr if self.metric == "psnr" else ssim
        return fn(cover, watermarked)

    def satisfied(self, **kwargs) -> bool:
        return self.value(**kwargs) > self.threshold
