"""
Embedding and extracting with a checkpoint
==========================================

Usage: python 05_embed_and_extract.py path/to/model.ckpt

Without an argument a briefly trained model is used, so the decoded
payload will mostly be noise; the mechanics are the same.
"""

import sys

import numpy as np
import torch

from ariw.attacks import AttackSpec, apply_attack
from ariw.checkpoint import load_checkpoint
from ariw.config import TrainConfig
from ariw.data import quantize, to_tensor
from ariw.decoder import extract
from ariw.encoder import embed
from ariw.metrics import bit_accuracy, psnr, ssim
from ariw.sample_data import natural_crops
from ariw.tensor_core import RngStream
from ariw.trainer import train
from ariw.wm_codec import bits_to_hex, hex_to_bits

if len(sys.argv) > 1:
    ckpt = load_checkpoint(sys.argv[1])
else:
    ckpt, _ = train(TrainConfig(steps=20), [to_tensor(c) for c in natural_crops(5, 64)])
model = ckpt.to_model()
L = ckpt.config.L

cover = to_tensor(natural_crops(1, 64, "heldout", seed=7)[0])
bits = hex_to_bits("beef"[: -(-L // 4)], L)

for alpha in (0.5, 1.0, 2.0):
    wm, res = embed(cover, bits, model, alpha=alpha, iters=ckpt.config.infer_iters)
    wm = quantize(wm)
    a, b = cover[0].permute(1, 2, 0), wm[0].permute(1, 2, 0)
    print("alpha %.1f  psnr %.2f  ssim %.4f  weights %s" % (alpha, psnr(a, b), ssim(a, b), np.round(res.weights.numpy(), 3)))
    for spec in (AttackSpec("identity"), AttackSpec("jpeg", 50, False), AttackSpec("dropout", 0.9, False)):
        soft, hard = extract(apply_attack(wm, cover, spec, RngStream(0, "demo")), model)
        print("   %-10s %s  acc %.3f" % (spec.label, bits_to_hex(hard[0]), bit_accuracy(hard[0], bits)))

# the residual is exactly linear in alpha before clamping
_, r1 = embed(cover, bits, model, alpha=0.7)
_, r2 = embed(cover, bits, model, alpha=1.4)
print("linear in alpha:", torch.equal(r2.composed, 2 * r1.composed))
