import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from ariw.gradmap import G_FLOOR, GradMode, gradient_map, modulate, normalize, raw_gradient, sobel_magnitude


def test_sobel_constant_is_zero():
    out = sobel_magnitude(torch.full((1, 3, 6, 6), 0.7, dtype=torch.float64))
    assert torch.all(out == 0)


def test_sobel_step_edge():
    img = torch.zeros(1, 1, 6, 6, dtype=torch.float64)
    img[..., 3:] = 1.0
    out = raw_gradient(img, mode=GradMode("sobel"))[0, 0]
    assert out.max() == 4.0
    assert torch.all(out[:, 2:4] == 4.0)
    assert torch.all(out[:, :2] == 0) and torch.all(out[:, 4:] == 0)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.floats(-2, 2))
def test_sobel_shift_invariant(seed, c):
    img = torch.from_numpy(np.random.default_rng(seed).random((1, 3, 8, 8)))
    torch.testing.assert_close(sobel_magnitude(img + c), sobel_magnitude(img), atol=1e-12, rtol=0)


def test_autodiff_identity_gives_ones():
    img = torch.rand(1, 3, 5, 5)
    assert torch.all(raw_gradient(img, lambda x: x) == 1.0)


def test_autodiff_matches_hand_derivative():
    img = torch.rand(1, 1, 4, 4, dtype=torch.float64)
    g = raw_gradient(img, lambda x: x**3)
    torch.testing.assert_close(g, 3 * img**2)


def test_autodiff_rejects_non_differentiable():
    with pytest.raises(ValueError):
        raw_gradient(torch.rand(1, 1, 3, 3), lambda x: x.detach() * 2)
    with pytest.raises(ValueError):
        raw_gradient(torch.rand(1, 1, 3, 3), None)


def test_mode_parse():
    assert GradMode.parse("off") == GradMode(enabled=False)
    assert GradMode.parse("Sobel").mode == "sobel"
    with pytest.raises(ValueError):
        GradMode.parse("laplace")


def test_normalize_examples():
    assert torch.all(normalize(torch.zeros(1, 3, 4, 4)) == 1.0)
    raw = torch.tensor([0.0, 5.0, 10.0], dtype=torch.float64).view(1, 1, 1, 3)
    assert normalize(raw).flatten().tolist() == pytest.approx([0.1, 0.55, 1.0], abs=1e-12)
    already = torch.tensor([G_FLOOR, 0.4, 1.0], dtype=torch.float64).view(1, 1, 1, 3)
    torch.testing.assert_close(normalize(already), already, atol=1e-6, rtol=0)


def test_normalize_per_image():
    raw = torch.stack([torch.arange(4.0), 10 * torch.arange(4.0)]).view(2, 1, 2, 2)
    out = normalize(raw)
    torch.testing.assert_close(out[0], out[1])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(1e-3, 1e3))
def test_normalize_range(seed, scale):
    raw = torch.from_numpy(np.random.default_rng(seed).random((2, 3, 5, 5)) * scale)
    out = normalize(raw)
    assert out.min() >= G_FLOOR - 1e-12 and out.max() <= 1 + 1e-12


def test_modulate_examples():
    rng = np.random.default_rng(0)
    r = torch.from_numpy(rng.normal(size=(1, 3, 4, 4)))
    assert torch.equal(modulate(r, torch.ones_like(r)), r)
    torch.testing.assert_close(modulate(r, torch.full_like(r, G_FLOOR)), 0.1 * r)
    g = torch.from_numpy(rng.uniform(0.1, 1, size=(1, 3, 4, 4)))
    out = modulate(r, g).numpy()
    rn, gn = r.numpy(), g.numpy()
    for idx in np.ndindex(rn.shape):
        assert out[idx] == rn[idx] * gn[idx]
    with pytest.raises(ValueError):
        modulate(r, torch.ones(1, 3, 4, 5))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_modulate_never_grows(seed):
    rng = np.random.default_rng(seed)
    r = torch.from_numpy(rng.normal(size=(1, 3, 6, 6)))
    g = normalize(torch.from_numpy(rng.random((1, 3, 6, 6))))
    assert torch.all(modulate(r, g).abs() <= r.abs())


def test_disabled_mode_is_ones():
    img = torch.rand(1, 3, 8, 8)
    assert torch.all(gradient_map(img, mode=GradMode(enabled=False)) == 1.0)
