"""
Desk-scale training run
=======================

Trains on 50 natural 64x64 crops with the desk configuration, then
reports PSNR, SSIM and bit accuracy per attack on 20 held-out crops.
Takes about half an hour on one CPU core.  Pass a step count to shorten.
"""

import logging
import sys
import tempfile
from pathlib import Path

from ariw.config import load_config
from ariw.data import ingest
from ariw.evaluation import run_eval
from ariw.sample_data import write_crops
from ariw.trainer import train, write_loss_log
from ariw.checkpoint import save_checkpoint

logging.basicConfig(level=logging.INFO, format="%(message)s")

cfg = load_config(Path(__file__).resolve().parent.parent / "configs" / "desk.cfg")
if len(sys.argv) > 1:
    cfg = cfg.replace(steps=int(sys.argv[1]))

work = Path(tempfile.mkdtemp(prefix="ariw_desk_"))
train_dir = write_crops(work / "train", 50, 64, "train", seed=0)
test_dir = write_crops(work / "heldout", 20, 64, "heldout", seed=1)

ckpt, history = train(cfg, ingest(train_dir, 64), log_every=250)
save_checkpoint(ckpt, work / "desk.ckpt")
write_loss_log(history, work / "desk.loss.csv")

report = run_eval(ckpt, ingest(test_dir, 64), [0.2, 0.6, 1.0, 1.4, 2.0])
report.write(work / "report.csv")
for r in report.rows:
    print("alpha %.1f  %-12s psnr %6.2f  ssim %.4f  acc %6.2f%%" % (r.alpha, r.attack, r.psnr, r.ssim, r.acc_percent))
print("outputs in", work)
