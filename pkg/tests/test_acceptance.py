"""Acceptance criteria 1-9.

Each test prints one ``criterion N: PASS|FAIL`` line; the lines are
repeated in the terminal summary.  The desk-scale training run is shared
by criteria 6, 7 and 9 through session fixtures.
"""

import io
import math
import time
from pathlib import Path

import numpy as np
import pytest
import torch
from PIL import Image
from skimage.metrics import peak_signal_noise_ratio, structural_similarity

from ariw.attacks import ATTACK_KINDS, AttackSpec, apply_attack, gaussian_kernel, jpeg
from ariw.config import load_config
from ariw.data import ingest, to_tensor
from ariw.decoder import aggregate
from ariw.encoder import compose, embed, robust_weights
from ariw.evaluation import run_eval
from ariw.gradmap import GradMode
from ariw.losses import bce, psnr_t
from ariw.metrics import bit_accuracy, psnr, ssim
from ariw.model import ARIWModel
from ariw.sample_data import natural_crops, write_crops
from ariw.tensor_core import RngStream
from ariw.trainer import train

DESK_CFG = Path(__file__).resolve().parent.parent / "configs" / "desk.cfg"
ALPHAS = (0.2, 0.6, 1.0, 1.4, 2.0)


# -- criterion 1 -------------------------------------------------------------


def test_c1_oracle_metrics(acceptance):
    t0 = time.time()
    rng = np.random.default_rng(2024)
    worst_ssim = worst_psnr = 0.0
    acc_ok = True
    for i in range(20):
        h, w = rng.integers(16, 48, 2)
        a = rng.random((h, w, 3))
        b = np.clip(a + rng.normal(scale=rng.uniform(0.005, 0.2), size=a.shape), 0, 1)
        ref_p = peak_signal_noise_ratio(a * 255, b * 255, data_range=255)
        ref_s = structural_similarity(a * 255, b * 255, data_range=255, channel_axis=2, gaussian_weights=True,
                                      sigma=1.5, use_sample_covariance=False)
        worst_psnr = max(worst_psnr, abs(psnr(a, b) - ref_p))
        worst_ssim = max(worst_ssim, abs(ssim(a, b) - ref_s))
        bits, truth = rng.integers(0, 2, 50), rng.integers(0, 2, 50)
        acc_ok &= bit_accuracy(bits, truth) == sum(int(x == y) for x, y in zip(bits, truth)) / 50
    dt = time.time() - t0
    ok = worst_psnr <= 1e-6 and worst_ssim <= 1e-4 and acc_ok and dt < 10
    acceptance(1, ok, f"max |dpsnr| {worst_psnr:.2e} dB, max |dssim| {worst_ssim:.2e}, {dt:.1f}s")
    assert ok


# -- criterion 2 -------------------------------------------------------------

SUITE_16 = [
    AttackSpec("identity"),
    AttackSpec("jpeg", 50),
    AttackSpec("jpeg", 10),
    AttackSpec("gauss_noise", 0.02),
    AttackSpec("gauss_blur", 3),
    AttackSpec("gauss_blur", 7),
    AttackSpec("crop", 0.03),
    AttackSpec("crop", 0.5),
    AttackSpec("cropout", 0.9),
    AttackSpec("cropout", 0.3),
    AttackSpec("dropout", 0.9),
    AttackSpec("dropout", 0.3),
    AttackSpec("scale", 0.5),
    AttackSpec("scale", 0.75),
]


def test_c2_attack_semantics(acceptance):
    t0 = time.time()
    failures = []
    rng = np.random.default_rng(7)
    for trial in range(8):
        wm = torch.from_numpy(rng.random((2, 3, 16, 16)))
        cover = torch.from_numpy(rng.random((2, 3, 16, 16)))
        for base in SUITE_16:
            for diff in (True, False):
                spec = AttackSpec(base.kind, base.param, diff)
                a = apply_attack(wm, cover, spec, RngStream(trial, spec.label))
                b = apply_attack(wm, cover, spec, RngStream(trial, spec.label))
                if a.shape != wm.shape or a.min() < 0 or a.max() > 1:
                    failures.append(f"range/shape {spec}")
                if not torch.equal(a, b):
                    failures.append(f"determinism {spec}")
                if spec.kind in ("cropout", "dropout"):
                    sel = (a == wm).all(1) | (a == cover).all(1)
                    if not torch.all(sel):
                        failures.append(f"convex selection {spec}")
        if not torch.equal(apply_attack(wm, cover, AttackSpec("identity")), wm):
            failures.append("identity no-op")
        if not torch.equal(apply_attack(wm, cover, AttackSpec("dropout", 1.0), RngStream(trial, "d")), wm):
            failures.append("dropout(1) no-op")
    for k in (3, 5, 7, 9, 11):
        if abs(float(gaussian_kernel(k).sum()) - 1) > 1e-9:
            failures.append(f"kernel sum k={k}")
        flat = torch.full((1, 3, 16, 16), 0.37, dtype=torch.float64)
        if not torch.allclose(apply_attack(flat, None, AttackSpec("gauss_blur", k)), flat, atol=1e-12, rtol=0):
            failures.append(f"blur constant k={k}")
    dt = time.time() - t0
    ok = not failures and dt < 30 and set(s.kind for s in SUITE_16) == set(ATTACK_KINDS)
    acceptance(2, ok, f"{len(failures)} violations over {len(SUITE_16)} specs x 2 flavours x 8 trials, {dt:.1f}s")
    assert ok, failures[:10]


# -- criterion 3 -------------------------------------------------------------


def test_c3_differentiable_jpeg_fidelity(acceptance):
    t0 = time.time()
    crops = natural_crops(10, 64, "heldout", seed=11)
    vals, libjpeg = [], []
    for c in crops:
        u8 = np.round(c * 255).astype(np.uint8)
        x = torch.from_numpy(u8.astype(np.float64) / 255).permute(2, 0, 1)[None]
        d = jpeg(x, 50, differentiable=True)[0].permute(1, 2, 0)
        f = jpeg(x, 50, differentiable=False)[0].permute(1, 2, 0)
        vals.append(psnr(d, f))
        buf = io.BytesIO()
        Image.fromarray(u8).save(buf, "JPEG", quality=50, subsampling=0)
        libjpeg.append(psnr(d, np.asarray(Image.open(buf)) / 255.0))
    dt = time.time() - t0
    ok = min(vals) >= 30 and dt < 30
    acceptance(3, ok, f"min PSNR(diff, faithful) {min(vals):.2f} dB; vs libjpeg min {min(libjpeg):.2f} dB; {dt:.1f}s")
    assert ok
    assert min(libjpeg) >= 30


# -- criterion 4 -------------------------------------------------------------


def _fd_check(fn, x0, h=1e-4):
    x = torch.tensor(x0, dtype=torch.float64, requires_grad=True)
    fn(x).backward()
    an = x.grad.numpy()
    fd = np.zeros_like(x0)
    for idx in np.ndindex(x0.shape):
        up, dn = x0.copy(), x0.copy()
        up[idx] += h
        dn[idx] -= h
        with torch.no_grad():
            fd[idx] = (float(fn(torch.from_numpy(up))) - float(fn(torch.from_numpy(dn)))) / (2 * h)
    return float(np.max(np.abs(an - fd)) / max(np.max(np.abs(fd)), 1e-12))


def test_c4_gradient_checks(acceptance):
    t0 = time.time()
    rng = np.random.default_rng(4)
    cover = torch.from_numpy(rng.uniform(0.2, 0.8, (1, 1, 3, 3)))
    truth = torch.from_numpy(rng.integers(0, 2, (1, 9)).astype(np.float64))
    x0 = cover.numpy() + rng.normal(scale=0.05, size=(1, 1, 3, 3))
    dense = torch.nn.Linear(2 * 3 * 2 * 2, 5).double()
    coeff = torch.from_numpy(rng.normal(size=5))
    checks = {
        "l1 mse": lambda x: (x - cover).pow(2).mean(),
        "l2 inv psnr": lambda x: 1.0 / psnr_t(cover, x),
        "l3 bce": lambda x: bce(torch.sigmoid(x.reshape(1, 9)), truth),
        "l4 branch sum": lambda x: bce(torch.sigmoid(x.reshape(1, 9)), truth)
        + bce(torch.sigmoid(2 * x.reshape(1, 9)), truth),
    }
    errs = {k: _fd_check(f, x0) for k, f in checks.items()}

    def agg(v):
        maps = [torch.tanh(v[i : i + 1]) for i in range(3)]
        return (aggregate(maps, dense)[0] * coeff).sum()

    errs["sigmoid/tanh/product aggregation"] = _fd_check(agg, rng.normal(size=(3, 3, 2, 2)))
    dt = time.time() - t0
    worst = max(errs.values())
    ok = worst <= 1e-3 and dt < 60
    acceptance(4, ok, "max rel err %.2e (%s), %.1fs" % (worst, max(errs, key=errs.get), dt))
    assert ok, errs


# -- criterion 5 -------------------------------------------------------------


def test_c5_algebraic_identities(acceptance):
    rng = np.random.default_rng(5)
    problems = []
    for _ in range(50):
        s = rng.normal(scale=5, size=rng.integers(1, 9))
        w = robust_weights(s)
        if abs(float(w.sum()) - 1) > 1e-6:
            problems.append("softmax sum")
        if not torch.allclose(robust_weights(s + rng.normal() * 10), w, atol=1e-12, rtol=1e-9):
            problems.append("softmax shift")
    r = torch.from_numpy(rng.normal(size=(1, 3, 8, 8)))
    g = torch.from_numpy(rng.uniform(0.1, 1, (1, 3, 8, 8)))
    w = robust_weights(rng.normal(size=4))
    if not torch.allclose(compose([r] * 4, w, g, 1.3), 1.3 * (g * r), atol=1e-12, rtol=0):
        problems.append("compose identical branches")
    cfg = load_config(DESK_CFG)
    model = ARIWModel(cfg)
    for i, c in enumerate(natural_crops(3, cfg.image_size, "heldout", seed=5)):
        cover = to_tensor(np.round(c * 255) / 255)
        bits = RngStream(i, "c5").bits(cfg.L)
        out, res = embed(cover, bits, model, alpha=0.0, iters=cfg.infer_iters)
        if not torch.equal(out, cover):
            problems.append("embed alpha=0")
        for a in (0.3, 0.8, 1.7):
            _, r1 = embed(cover, bits, model, alpha=a, iters=cfg.infer_iters)
            _, r2 = embed(cover, bits, model, alpha=2 * a, iters=cfg.infer_iters)
            if not torch.equal(r2.composed, 2 * r1.composed):
                problems.append(f"linearity alpha={a}")
    ok = not problems
    acceptance(5, ok, "softmax sum/shift, compose, embed(0) = cover, exact linearity" + (f": {problems}" if problems else ""))
    assert ok


# -- desk-scale fixtures -------------------------------------------------------


@pytest.fixture(scope="session")
def desk_dirs(tmp_path_factory):
    root = tmp_path_factory.mktemp("desk")
    train_dir = write_crops(root / "train", 50, 64, "train", seed=0)
    test_dir = write_crops(root / "heldout", 20, 64, "heldout", seed=1)
    return ingest(train_dir, 64), ingest(test_dir, 64)


def _desk_run(desk_dirs):
    cfg = load_config(DESK_CFG)
    t0 = time.time()
    ckpt, _ = train(cfg, desk_dirs[0], log_every=500)
    minutes = (time.time() - t0) / 60
    report = run_eval(ckpt, desk_dirs[1], list(ALPHAS), seed=0)
    return ckpt, report, minutes


@pytest.fixture(scope="session")
def desk_run(desk_dirs):
    return _desk_run(desk_dirs)


# -- criterion 6 -------------------------------------------------------------


def test_c6_desk_scale_gate(acceptance, desk_run):
    ckpt, report, minutes = desk_run
    cfg = ckpt.config
    assert (cfg.image_size, cfg.L, cfg.steps) == (64, 16, 3000)
    rows = [r for r in report.rows if r.alpha == 1.0]
    ident = next(r for r in rows if r.attack == "identity")
    others = {f"{r.attack}:{r.param:g}": r.acc_percent for r in rows if r.attack != "identity"}
    ok = (ident.acc_percent >= 95 and all(v >= 85 for v in others.values())
          and ident.psnr >= 30 and ident.ssim >= 0.90)
    detail = "identity %.1f%%, %s, psnr %.2f, ssim %.4f, train %.1f min" % (
        ident.acc_percent, ", ".join(f"{k} {v:.1f}%" for k, v in others.items()), ident.psnr, ident.ssim, minutes)
    acceptance(6, ok, detail)
    assert ok


# -- criterion 7 -------------------------------------------------------------


def test_c7_strength_trend(acceptance, desk_run):
    _, report, _ = desk_run
    ps = [report.get(a, "identity").psnr for a in ALPHAS]
    jp = [report.get(a, "jpeg").acc_percent for a in ALPHAS]
    dec = all(x > y for x, y in zip(ps, ps[1:]))
    nondec = all(y >= x for x, y in zip(jp, jp[1:]))
    ok = dec and nondec
    acceptance(7, ok, "psnr %s; jpeg acc %s" % ([round(p, 2) for p in ps], [round(a, 2) for a in jp]))
    assert ok


# -- criterion 8 -------------------------------------------------------------


def test_c8_ablation_knobs(acceptance, desk_dirs):
    base = load_config(DESK_CFG).replace(steps=200)
    variants = {f"init={k}": base.replace(init_kind=k) for k in ("ones", "zeros", "cover", "gaussian")}
    variants["grad=off"] = base.replace(grad_mode=GradMode(enabled=False))
    variants.update({f"k={k}": base.replace(kernel_size=k) for k in (1, 5, 7)})
    digests, problems = {}, []
    t0 = time.time()
    for name, cfg in variants.items():
        try:
            ckpt, hist = train(cfg, desk_dirs[0], log_every=0)
        except FloatingPointError as exc:
            problems.append(f"{name}: {exc}")
            continue
        if not all(np.isfinite(v).all() for v in ckpt.tensors.values()):
            problems.append(f"{name}: non-finite parameters")
        if not all(math.isfinite(h["total"]) for h in hist):
            problems.append(f"{name}: non-finite loss")
        digests[name] = ckpt.digest()
    distinct = len(set(digests.values())) == len(variants)
    ok = not problems and distinct
    acceptance(8, ok, f"{len(digests)}/{len(variants)} variants trained 200 steps, "
                      f"{len(set(digests.values()))} distinct checkpoints, {(time.time() - t0) / 60:.1f} min")
    assert ok, problems


# -- criterion 9 -------------------------------------------------------------


def test_c9_determinism(acceptance, desk_run, desk_dirs):
    ckpt_a, report_a, _ = desk_run
    ckpt_b, report_b, _ = _desk_run(desk_dirs)
    same_bytes = ckpt_a.to_bytes() == ckpt_b.to_bytes()
    same_report = report_a == report_b and report_a.to_csv() == report_b.to_csv()
    ok = same_bytes and same_report
    acceptance(9, ok, f"checkpoints identical: {same_bytes} (sha256 {ckpt_a.digest()[:16]}), reports identical: {same_report}")
    assert ok
