"""Robustness and imperceptibility reports over an image folder."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import torch

from .attacks import AttackSuite, apply_attack
from .checkpoint import Checkpoint
from .data import quantize
from .decoder import extract
from .encoder import InitState, embed
from .metrics import bit_accuracy, psnr, ssim
from .tensor_core import RngStream

__all__ = ["REPORT_HEADER", "ReportRow", "EvalReport", "run_eval"]

log = logging.getLogger(__name__)

REPORT_HEADER = ("dataset", "alpha", "attack", "param", "psnr", "ssim", "acc_percent", "n")


@dataclass(frozen=True)
class ReportRow:
    dataset: str
    alpha: float
    attack: str
    param: float
    psnr: float
    ssim: float
    acc_percent: float
    n: int


@dataclass
class EvalReport:
    rows: list = field(default_factory=list)

    def get(self, alpha: float, attack: str, param: float | None = None, dataset: str | None = None) -> ReportRow:
        for r in self.rows:
            if r.alpha == alpha and r.attack == attack and (param is None or r.param == param):
                if dataset is None or r.dataset == dataset:
                    return r
        raise KeyError((dataset, alpha, attack, param))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_HEADER)
        for r in self.rows:
            w.writerow([r.dataset, repr(r.alpha), r.attack, repr(r.param), repr(r.psnr), repr(r.ssim),
                        repr(r.acc_percent), r.n])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "EvalReport":
        reader = csv.reader(io.StringIO(text))
        header = tuple(next(reader))
        if header != REPORT_HEADER:
            raise ValueError(f"unexpected report header {header}")
        rows = []
        for rec in reader:
            if not rec:
                continue
            d, a, k, p, ps, ss, acc, n = rec
            rows.append(ReportRow(d, float(a), k, float(p), float(ps), float(ss), float(acc), int(n)))
        return cls(rows)

    def write(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())


def run_eval(
    ckpt: Checkpoint,
    data,
    alphas: Sequence[float],
    suite: AttackSuite | None = None,
    seed: int = 0,
    dataset: str | None = None,
) -> EvalReport:
    """Embed a fresh payload into every image at every strength, attack it, decode it.

    Attacks run in their faithful flavour on the 8-bit watermarked image.
    PSNR and SSIM compare the cover with the watermarked image before the
    attack.
    """
    model = ckpt.to_model()
    cfg = ckpt.config
    suite = (suite or cfg.attack_suite).faithful()
    images = data.tensors() if hasattr(data, "tensors") else list(data)
    if not images:
        raise ValueError("evaluation dataset is empty")
    for im in images:
        model.check_image(im)
    name = dataset or (getattr(data, "path", None) and data.path.name) or "data"
    init = InitState(cfg.init_kind)

    quality = {a: [] for a in alphas}
    acc = {(a, i): [] for a in alphas for i in range(len(suite))}
    for j, cover in enumerate(images):
        bits = RngStream(seed, f"eval.bits{j}").bits(cfg.L)
        for a in alphas:
            wm_img, _ = embed(cover, bits, model, alpha=a, iters=cfg.infer_iters, init=init,
                              rng=RngStream(seed, f"eval.init{j}"))
            wm_img = quantize(wm_img)
            quality[a].append((psnr(cover[0].permute(1, 2, 0), wm_img[0].permute(1, 2, 0)),
                               ssim(cover[0].permute(1, 2, 0), wm_img[0].permute(1, 2, 0))))
            for i, spec in enumerate(suite):
                with torch.no_grad():
                    attacked = apply_attack(wm_img, cover, spec, RngStream(seed, f"eval.attack{j}.{a!r}.{i}"))
                _, hard = extract(attacked, model)
                acc[(a, i)].append(bit_accuracy(hard[0], bits))

    report = EvalReport()
    for a in alphas:
        q = np.array(quality[a])
        for i, spec in enumerate(suite):
            report.rows.append(ReportRow(name, float(a), spec.kind, float(spec.param), float(q[:, 0].mean()),
                                         float(q[:, 1].mean()), 100.0 * float(np.mean(acc[(a, i)])), len(images)))
        ident = [r for r in report.rows[-len(suite):] if r.attack == "identity"]
        if ident:
            worse = [r.attack for r in report.rows[-len(suite):] if r.acc_percent > ident[0].acc_percent]
            if worse:
                log.warning("alpha %g: identity accuracy below %s", a, ", ".join(worse))
    return report
