"""
Ablation knobs
==============

Short runs over the initial iteration state, the strength map and the
kernel size.  Each run prints its final losses and a checkpoint digest.
"""

from ariw.config import TrainConfig
from ariw.data import to_tensor
from ariw.gradmap import GradMode
from ariw.sample_data import natural_crops
from ariw.trainer import train

data = [to_tensor(c) for c in natural_crops(10, 64)]
base = TrainConfig(steps=30)

variants = {f"init={k}": base.replace(init_kind=k) for k in ("ones", "zeros", "cover", "gaussian")}
variants["no gradient map"] = base.replace(grad_mode=GradMode(enabled=False))
variants.update({f"kernel={k}": base.replace(kernel_size=k) for k in (1, 5, 7)})

for name, cfg in variants.items():
    ckpt, hist = train(cfg, data, log_every=0)
    last = hist[-1]
    print("%-16s total %.4f  l3 %.4f  digest %s" % (name, last["total"], last["l3"], ckpt.digest()[:12]))
