"""
The distortion suite
====================

Each attack applied to a natural crop, with the PSNR it costs.  The
differentiable JPEG is compared with the faithful one and with libjpeg.
"""

import io

import numpy as np
import torch
from PIL import Image

from ariw.attacks import AttackSpec, AttackSuite, apply_attack, jpeg
from ariw.data import to_tensor
from ariw.metrics import psnr
from ariw.sample_data import natural_crops
from ariw.tensor_core import RngStream

crops = natural_crops(2, 64, "heldout", seed=0)
wm, cover = to_tensor(crops[0]), to_tensor(crops[1])

for spec in AttackSuite.full_default().faithful():
    out = apply_attack(wm, cover, spec, RngStream(0, f"demo.{spec.kind}"))
    print("%-18s psnr vs input %6.2f dB" % (spec.label, psnr(wm[0].permute(1, 2, 0), out[0].permute(1, 2, 0))))

x = wm.double()
soft = jpeg(x, 50, differentiable=True)
hard = jpeg(x, 50, differentiable=False)
print("differentiable vs faithful JPEG: %.2f dB" % psnr(soft[0].permute(1, 2, 0), hard[0].permute(1, 2, 0)))

u8 = np.round(crops[0] * 255).astype(np.uint8)
buf = io.BytesIO()
Image.fromarray(u8).save(buf, "JPEG", quality=50, subsampling=0)
ref = np.asarray(Image.open(buf)) / 255.0
print("faithful JPEG vs libjpeg:        %.2f dB" % psnr(hard[0].permute(1, 2, 0), ref))

# straight-through: the round does not stop gradients
x.requires_grad_(True)
jpeg(x, 50).sum().backward()
print("mean gradient through JPEG: %.3f" % x.grad.mean())
