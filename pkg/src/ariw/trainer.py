"""Joint encoder/decoder training."""

from __future__ import annotations

import csv
import logging
import time
from typing import Callable, Optional

import numpy as np
import torch

from .attacks import apply_attack
from .checkpoint import Checkpoint
from .config import TrainConfig
from .encoder import InitState, compose, encode_branches, robust_weights
from .losses import LossBreakdown, bce, compute_losses
from .model import ARIWModel
from .tensor_core import RngStream, ste_clamp

__all__ = ["Trainer", "train", "write_loss_log"]

log = logging.getLogger(__name__)

LOG_FACTOR_MIN, LOG_FACTOR_MAX = -7.0, 9.0


class Trainer:
    """Owns the model, the Adam state, the per-image iteration cache and the robust-weight EMA."""

    def __init__(self, cfg: TrainConfig, model: Optional[ARIWModel] = None):
        self.cfg = cfg
        self.model = model if model is not None else ARIWModel(cfg)
        self.model.train()
        dec = list(self.model.decoder.parameters())
        dec_ids = {id(p) for p in dec}
        rest = [p for p in self.model.parameters() if id(p) not in dec_ids]
        self.optimizer = torch.optim.Adam(
            [{"params": rest, "lr": cfg.lr}, {"params": dec, "lr": cfg.lr * cfg.decoder_lr_scale}],
            lr=cfg.lr,
            betas=(0.9, 0.999),
            eps=1e-8,
        )
        self.suite = cfg.attack_suite
        self.init = InitState(cfg.init_kind)
        self.cache: dict = {}
        self.step = 0
        self.history: list = []
        self.quality_log_factor = 0.0

    def _initial_state(self, image: torch.Tensor, image_id) -> torch.Tensor:
        return self.init.realize(image, RngStream(self.cfg.seed, f"init.state.{image_id}"))

    def train_step(self, image: torch.Tensor, bits, image_id=0) -> LossBreakdown:
        cfg, model = self.cfg, self.model
        rng = RngStream(cfg.seed, f"train.step{self.step}")
        truth = torch.as_tensor(np.asarray(bits), dtype=image.dtype).reshape(1, -1)
        alpha = cfg.alpha_train

        wm = model.expand(truth)
        g = model.gradient_map(image, wm, model.robust_weights)
        state = self.cache.get(image_id)
        if state is None:
            state = self._initial_state(image, image_id)
        weights = model.robust_weights
        with torch.no_grad():
            for _ in range(cfg.train_iters - 1):
                state = compose(encode_branches(state, wm, model.encoder), weights, g, 1.0)
        branches = encode_branches(state, wm, model.encoder)

        attacked = []
        for i, spec in enumerate(self.suite):
            branch_img = ste_clamp(image + alpha * (g * branches[i]))
            attacked.append(apply_attack(branch_img, image, spec, rng.child(f"attack{i}")))
        soft_branches = model.decoder(torch.cat(attacked)).split(1)

        with torch.no_grad():
            per_branch = torch.stack([bce(s, truth) for s in soft_branches])
            if not torch.isfinite(per_branch).all():
                bad = [spec.label for spec, v in zip(self.suite, per_branch) if not torch.isfinite(v)]
                raise FloatingPointError(f"non-finite loss term l4 (branches {', '.join(bad)}) at step {self.step}")
            weights = robust_weights(-per_branch)
        unit = compose(branches, weights, g, 1.0)
        wm_img = ste_clamp(image + alpha * unit)
        soft_global = model.decoder(wm_img)

        losses = compute_losses(image, wm_img, soft_global, soft_branches, truth, self.loss_weights())
        losses.check_finite()
        self.optimizer.zero_grad(set_to_none=False)
        losses.total.backward()
        self.optimizer.step()

        self.cache[image_id] = unit.detach()
        if cfg.psnr_target > 0:
            self._update_quality(1.0 / float(losses.l2_inv_psnr.detach()))
        with torch.no_grad():
            ema = cfg.ema_decay * model.robust_weights + (1.0 - cfg.ema_decay) * weights
            model.robust_weights.copy_(ema / ema.sum())
        self.history.append(
            {"step": self.step, **losses.terms(), **{f"w{i + 1}": float(w) for i, w in enumerate(weights)}}
        )
        self.step += 1
        return losses

    def psnr_target_at(self, step: int) -> float:
        cfg = self.cfg
        if cfg.psnr_target_ramp <= 0:
            return cfg.psnr_target
        t = min(1.0, step / cfg.psnr_target_ramp)
        return cfg.psnr_target_start + t * (cfg.psnr_target - cfg.psnr_target_start)

    def _update_quality(self, measured: float) -> None:
        # integral control in log space: too sharp -> image weights grow, too faint -> they shrink
        err = self.psnr_target_at(self.step) - measured
        lf = self.quality_log_factor + self.cfg.quality_gain * err
        self.quality_log_factor = min(max(lf, LOG_FACTOR_MIN), LOG_FACTOR_MAX)

    def loss_weights(self):
        """Weights for the current step.

        With ``psnr_target`` set, the MSE and 1/PSNR weights are multiplied by
        exp(quality_log_factor), which an integral controller steers so the
        training PSNR follows the target schedule. The payload terms keep
        their configured weights.
        """
        if self.cfg.psnr_target <= 0:
            return self.cfg.loss_weights
        return self.cfg.loss_weights.scaled_quality(float(np.exp(self.quality_log_factor)))

    def checkpoint(self) -> Checkpoint:
        return Checkpoint.from_model(self.model, self.step)


def train(
    cfg: TrainConfig,
    dataset,
    progress: Optional[Callable[[int, LossBreakdown], None]] = None,
    log_every: int = 100,
) -> tuple[Checkpoint, list]:
    """Run ``cfg.steps`` steps over ``dataset``; returns the checkpoint and the loss log."""
    images = dataset.tensors() if hasattr(dataset, "tensors") else list(dataset)
    if not images:
        raise ValueError("training dataset is empty")
    want = (1, 3, cfg.image_size, cfg.image_size)
    for i, im in enumerate(images):
        if tuple(im.shape) != want:
            name = dataset.names[i] if hasattr(dataset, "names") else str(i)
            raise ValueError(f"training image {name} has shape {tuple(im.shape)}, expected {want}")
    trainer = Trainer(cfg)
    order: np.ndarray = np.array([], dtype=int)
    t0 = time.time()
    for step in range(cfg.steps):
        pos = step % len(images)
        if pos == 0:
            order = RngStream(cfg.seed, f"data.epoch{step // len(images)}").permutation(len(images))
        idx = int(order[pos])
        bits = RngStream(cfg.seed, f"train.step{step}.bits").bits(cfg.L)
        losses = trainer.train_step(images[idx], bits, image_id=idx)
        if progress is not None:
            progress(step, losses)
        if log_every and (step + 1) % log_every == 0:
            recent = trainer.history[-log_every:]
            log.info(
                "step %d/%d total %.4f l3 %.4f l4 %.4f (%.1fs)",
                step + 1,
                cfg.steps,
                np.mean([r["total"] for r in recent]),
                np.mean([r["l3"] for r in recent]),
                np.mean([r["l4"] for r in recent]),
                time.time() - t0,
            )
    return trainer.checkpoint(), trainer.history


def write_loss_log(history: list, path) -> None:
    if not history:
        return
    fields = list(history[0].keys())
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for row in history:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
