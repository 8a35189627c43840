"""
Where the watermark is allowed to be strong
===========================================

The strength map G rises in textured regions and falls to 0.1 in flat
ones.  Sobel mode needs no model; autodiff mode differentiates an encoder.
"""

import numpy as np
import torch

from ariw.config import TrainConfig
from ariw.data import to_tensor
from ariw.gradmap import GradMode, gradient_map
from ariw.model import ARIWModel
from ariw.sample_data import natural_crops

img = to_tensor(natural_crops(1, 64, "heldout", seed=3)[0])

g_sobel = gradient_map(img, mode=GradMode("sobel"))
print("sobel   G: min %.3f  mean %.3f  max %.3f" % (g_sobel.min(), g_sobel.mean(), g_sobel.max()))

model = ARIWModel(TrainConfig())
bits = torch.ones(1, 16)
wm = model.expand(bits)
g_auto = model.gradient_map(img, wm)
print("autodiff G: min %.3f  mean %.3f  max %.3f" % (g_auto.min(), g_auto.mean(), g_auto.max()))

# flat image: no structure at all, so the map falls back to all ones
flat = torch.full_like(img, 0.5)
print("flat image ->", torch.unique(gradient_map(flat, mode=GradMode("sobel"))).tolist())

# correlation between the two flavours on this crop
a, b = g_sobel.flatten().numpy(), g_auto.flatten().numpy()
print("corr(sobel, autodiff) = %.3f" % np.corrcoef(a, b)[0, 1])
