"""``ariw`` command line: train, embed, extract, attack, eval."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import torch

from .attacks import AttackSpec, apply_attack
from .checkpoint import load_checkpoint, save_checkpoint
from .config import load_config
from .data import ingest, load_image, save_png, to_tensor
from .decoder import extract
from .encoder import InitState, embed
from .evaluation import run_eval
from .tensor_core import RngStream
from .trainer import train, write_loss_log
from .wm_codec import bits_to_hex, hex_to_bits


def _cmd_train(args) -> int:
    cfg = load_config(args.config)
    data = ingest(args.data, cfg.image_size)
    ckpt, history = train(cfg, data)
    save_checkpoint(ckpt, args.out)
    log_path = Path(args.loss_log) if args.loss_log else Path(args.out).with_suffix(".loss.csv")
    write_loss_log(history, log_path)
    print(f"wrote {args.out} ({ckpt.step} steps), loss log {log_path}")
    return 0


def _cmd_embed(args) -> int:
    ckpt = load_checkpoint(args.model)
    cfg = ckpt.config
    model = ckpt.to_model()
    bits = hex_to_bits(args.bits, cfg.L)
    cover = to_tensor(load_image(args.image, cfg.image_size))
    out, _ = embed(cover, bits, model, alpha=args.alpha, iters=cfg.infer_iters, init=InitState(cfg.init_kind),
                   rng=RngStream(cfg.seed, "embed.init"))
    save_png(out, args.out)
    return 0


def _cmd_extract(args) -> int:
    ckpt = load_checkpoint(args.model)
    model = ckpt.to_model()
    img = to_tensor(load_image(args.image, ckpt.config.image_size))
    soft, hard = extract(img, model)
    print(bits_to_hex(hard[0]))
    print(" ".join(f"{v:.6f}" for v in soft[0].tolist()))
    return 0


def _cmd_attack(args) -> int:
    spec = AttackSpec(args.kind, args.param, differentiable=False)
    wm = load_image(args.inp)
    cover = None
    if args.cover is not None:
        cover = to_tensor(load_image(args.cover))
        if cover.shape[-2:] != wm.shape[:2]:
            raise ValueError(f"cover {tuple(cover.shape[-2:])} and image {wm.shape[:2]} sizes differ")
    with torch.no_grad():
        out = apply_attack(to_tensor(wm), cover, spec, RngStream(args.seed, f"attack.{spec.kind}"))
    save_png(out, args.out)
    return 0


def _cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.model)
    data = ingest(args.data, ckpt.config.image_size)
    alphas = [float(a) for a in args.alphas.split(",") if a.strip()]
    report = run_eval(ckpt, data, alphas, seed=args.seed)
    report.write(args.report)
    for r in report.rows:
        print(f"alpha {r.alpha:g} {r.attack}:{r.param:g} psnr {r.psnr:.2f} ssim {r.ssim:.4f} acc {r.acc_percent:.2f}%")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ariw", description="Robust image watermarking")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a model from a config file and an image folder")
    t.add_argument("--config", required=True)
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--loss-log", default=None, help="CSV path (default: <out>.loss.csv)")
    t.set_defaults(func=_cmd_train)

    e = sub.add_parser("embed", help="watermark one image")
    e.add_argument("--model", required=True)
    e.add_argument("--image", required=True)
    e.add_argument("--bits", required=True, help="payload as hex, MSB first")
    e.add_argument("--alpha", type=float, default=1.0)
    e.add_argument("--out", required=True)
    e.set_defaults(func=_cmd_embed)

    x = sub.add_parser("extract", help="decode the payload of one image")
    x.add_argument("--model", required=True)
    x.add_argument("--image", required=True)
    x.set_defaults(func=_cmd_extract)

    a = sub.add_parser("attack", help="apply one distortion to an image")
    a.add_argument("--kind", required=True)
    a.add_argument("--param", type=float, default=0.0)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--in", dest="inp", required=True)
    a.add_argument("--cover", default=None)
    a.add_argument("--out", required=True)
    a.set_defaults(func=_cmd_attack)

    v = sub.add_parser("eval", help="robustness report over an image folder")
    v.add_argument("--model", required=True)
    v.add_argument("--data", required=True)
    v.add_argument("--alphas", default="0.2,0.4,0.6,0.8,1.0")
    v.add_argument("--report", required=True)
    v.add_argument("--seed", type=int, default=0)
    v.set_defaults(func=_cmd_eval)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"ariw: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
