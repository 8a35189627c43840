"""
From payload bits to a spatial watermark
========================================

A 16-bit payload becomes a 64x64x3 tensor: a linear projection to 192
values, a reshape to an 8x8x3 grid, then 8x nearest upsampling.
"""

import numpy as np
import torch

from ariw.tensor_core import RngStream
from ariw.wm_codec import ExpandConfig, WatermarkProjection, bits_to_hex, expand, hex_to_bits

cfg = ExpandConfig.for_image(64, 64, 3, L=16)
print(cfg)

proj = WatermarkProjection(cfg.L, cfg.L1, RngStream(0, "demo.projection"))
bits = hex_to_bits("c0de", 16)
print("payload", bits_to_hex(bits), bits.tolist())

wm = expand(torch.from_numpy(bits).float(), cfg, proj)[0].detach().numpy()
print("spatial watermark", wm.shape, "range %.4f .. %.4f" % (wm.min(), wm.max()))

# every 8x8 block inside a channel holds one grid value
blocks = wm.reshape(3, 8, 8, 8, 8)
print("max spread inside a block:", np.ptp(blocks, axis=(2, 4)).max())

# hex round trip for an awkward length
odd = RngStream(1, "demo.bits").bits(13)
print(bits_to_hex(odd), np.array_equal(hex_to_bits(bits_to_hex(odd), 13), odd))
