import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from ariw.config import LossWeights
from ariw.losses import BCE_EPS, bce, compute_losses, psnr_t
from ariw.metrics import PSNR_CAP, QualityConstraint, bit_accuracy, psnr, ssim


def img(seed, shape=(16, 16, 3)):
    return np.random.default_rng(seed).random(shape)


def test_psnr_examples():
    a = img(0)
    assert psnr(a, a) == PSNR_CAP
    b = np.clip(a, 1 / 255, 1)
    shifted = b - 1 / 255
    assert psnr(b, shifted) == pytest.approx(10 * math.log10(65025), abs=1e-9)
    assert psnr(b, shifted) == pytest.approx(48.1308, abs=1e-4)
    assert psnr(np.zeros((4, 4, 3)), np.ones((4, 4, 3))) == pytest.approx(0.0, abs=1e-12)


def test_ssim_examples():
    a = img(1)
    assert ssim(a, a) == pytest.approx(1.0, abs=1e-12)
    x, y = 0.2, 0.7
    c1 = (0.01 * 255) ** 2
    ref = (2 * x * y * 255**2 + c1) / ((x * 255) ** 2 + (y * 255) ** 2 + c1)
    assert ssim(np.full((12, 12, 3), x), np.full((12, 12, 3), y)) == pytest.approx(ref, abs=1e-9)
    with pytest.raises(ValueError):
        ssim(np.zeros((10, 12, 3)), np.zeros((10, 12, 3)))


def test_bit_accuracy_examples():
    t = np.array([1, 0, 1, 1])
    assert bit_accuracy(t, t) == 1.0
    assert bit_accuracy(1 - t, t) == 0.0
    assert bit_accuracy([1, 0, 0, 1], t) == 0.75
    with pytest.raises(ValueError):
        bit_accuracy([1, 0], t)


def test_quality_constraint():
    a = img(2)
    q = QualityConstraint("psnr", 40)
    assert q.satisfied(cover=a, watermarked=a)
    assert not QualityConstraint("bit_accuracy", 0.9).satisfied(pred_bits=[1, 0], true_bits=[1, 1])
    with pytest.raises(ValueError):
        QualityConstraint("lpips", 0.1)


def t(x):
    return torch.as_tensor(x, dtype=torch.float64)


def test_plug_in_losses():
    cover = t(img(3)).permute(2, 0, 1)[None]
    truth = t([1, 0, 1, 0])
    perfect = truth.clone()[None]
    lb = compute_losses(cover, cover.clone(), perfect, [perfect, perfect], truth)
    assert float(lb.l1_mse) == 0
    assert float(lb.l2_inv_psnr) == pytest.approx(0.01)
    assert 0 <= float(lb.l3_global_ce) <= 1e-6
    assert float(lb.total) == pytest.approx(0.01, abs=1e-5)
    half = torch.full((1, 4), 0.5, dtype=torch.float64)
    assert float(compute_losses(cover, cover, half, [], truth).l3_global_ce) == pytest.approx(math.log(2))
    wm = cover + 0.1
    assert float(compute_losses(cover, wm, half, [], truth).l1_mse) == pytest.approx(0.01)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(0, 3), st.floats(0, 3), st.floats(0, 3), st.floats(0, 3))
def test_breakdown_invariants(seed, a, b, c, d):
    rng = np.random.default_rng(seed)
    cover = t(rng.random((1, 3, 8, 8)))
    wm = (cover + t(rng.normal(scale=0.05, size=cover.shape))).clamp(0, 1)
    truth = t(rng.integers(0, 2, 6))
    sg = t(rng.random((1, 6)))
    sb = [t(rng.random((1, 6))) for _ in range(3)]
    lam = LossWeights(a, b, c, d)
    lb = compute_losses(cover, wm, sg, sb, truth, lam)
    ref = a * lb.l1_mse + b * lb.l2_inv_psnr + c * lb.l3_global_ce + d * lb.l4_local_ce_sum
    assert float(lb.total) == pytest.approx(float(ref), abs=1e-6)
    for v in lb.terms().values():
        assert v >= 0
    assert float(lb.l4_local_ce_sum) == pytest.approx(float(lb.per_branch_ce.sum()))
    swapped = compute_losses(wm, cover, sg, sb, truth, lam)
    assert float(swapped.l1_mse) == float(lb.l1_mse)
    assert float(swapped.l2_inv_psnr) == pytest.approx(float(lb.l2_inv_psnr), rel=1e-12)


def test_bce_minimum_at_truth():
    truth = t([1, 0, 1])
    best = bce(truth.clone(), truth)
    assert float(best) == pytest.approx(-math.log(1 - BCE_EPS), rel=1e-6)
    for eps in (0.01, 0.3):
        assert float(bce((truth - eps).abs(), truth)) > float(best)


def central_difference(fn, x, h=1e-4):
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        up, dn = x.copy(), x.copy()
        up[idx] += h
        dn[idx] -= h
        grad[idx] = (fn(up) - fn(dn)) / (2 * h)
    return grad


BASE = np.random.default_rng(9).uniform(0.2, 0.8, (1, 1, 3, 3))
TRUTH = np.array([1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0])


def loss_terms():
    cover = t(BASE)
    return {
        "l1": lambda x: (x - cover).pow(2).mean(),
        "l2": lambda x: 1.0 / psnr_t(cover, x),
        "l3": lambda x: bce(x.reshape(1, 9), t(TRUTH).reshape(1, 9)),
        "l4": lambda x: bce(x.reshape(1, 9), t(TRUTH).reshape(1, 9)) + bce((1 - x).reshape(1, 9), t(TRUTH).reshape(1, 9)),
    }


@pytest.mark.parametrize("name", ["l1", "l2", "l3", "l4"])
def test_loss_gradients_match_finite_differences(name):
    fn = loss_terms()[name]
    x0 = BASE + np.random.default_rng(10).normal(scale=0.05, size=BASE.shape)
    x = t(x0).requires_grad_(True)
    fn(x).backward()
    fd = central_difference(lambda a: float(fn(t(a))), x0)
    an = x.grad.numpy()
    assert np.max(np.abs(an - fd)) <= 1e-3 * np.max(np.abs(fd))


def test_psnr_t_matches_metric():
    a, b = img(4), np.clip(img(4) + 0.01, 0, 1)
    assert float(psnr_t(t(a), t(b))) == pytest.approx(psnr(a, b), abs=1e-9)
