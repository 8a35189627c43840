"""Versioned, self-describing checkpoint container.

Layout::

    b"ARIWCKPT"             8-byte magic
    version                 uint32, little endian
    header_len              uint64, little endian
    header                  UTF-8 JSON (sorted keys)
    tensor data             raw little-endian float32, concatenated in header order

The header carries the training configuration, the step counter, the
robust-weight EMA (float64, as JSON numbers) and a name/shape/offset record
for every tensor.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .config import TrainConfig, parse_config

__all__ = ["MAGIC", "VERSION", "Checkpoint", "save_checkpoint", "load_checkpoint", "checkpoint_bytes"]

MAGIC = b"ARIWCKPT"
VERSION = 1
_EXCLUDED = ("robust_weights",)


@dataclass
class Checkpoint:
    config: TrainConfig
    tensors: dict
    robust_weights: list
    step: int
    rng: dict = field(default_factory=dict)

    @classmethod
    def from_model(cls, model, step: int) -> "Checkpoint":
        tensors = {
            name: t.detach().cpu().numpy().astype("<f4")
            for name, t in model.state_dict().items()
            if name not in _EXCLUDED
        }
        return cls(
            config=model.config,
            tensors=tensors,
            robust_weights=[float(w) for w in model.robust_weights],
            step=int(step),
            rng={"seed": model.config.seed, "next_step": int(step), "generator": "philox(seed, stream_id)"},
        )

    def to_model(self):
        from .model import ARIWModel

        model = ARIWModel(self.config)
        expected = {k: tuple(v.shape) for k, v in model.state_dict().items() if k not in _EXCLUDED}
        got = {k: tuple(v.shape) for k, v in self.tensors.items()}
        if expected != got:
            diff = sorted(
                f"{k}: checkpoint {got.get(k)} vs model {expected.get(k)}"
                for k in set(expected) | set(got)
                if expected.get(k) != got.get(k)
            )
            raise ValueError("checkpoint does not match its configuration: " + "; ".join(diff))
        state = {k: torch.from_numpy(np.array(v, dtype=np.float32)) for k, v in self.tensors.items()}
        state["robust_weights"] = torch.tensor(self.robust_weights, dtype=torch.float64)
        model.load_state_dict(state)
        model.eval()
        return model

    def to_bytes(self) -> bytes:
        index, offset, blobs = [], 0, []
        for name, arr in self.tensors.items():
            data = np.ascontiguousarray(arr, dtype="<f4").tobytes()
            index.append({"name": name, "shape": list(arr.shape), "dtype": "<f4", "offset": offset, "nbytes": len(data)})
            blobs.append(data)
            offset += len(data)
        header = {
            "format": "ariw-checkpoint",
            "version": VERSION,
            "config": self.config.to_dict(),
            "step": self.step,
            "robust_weights_ema": self.robust_weights,
            "rng": self.rng,
            "tensors": index,
        }
        hdr = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
        return MAGIC + struct.pack("<IQ", VERSION, len(hdr)) + hdr + b"".join(blobs)

    @classmethod
    def from_bytes(cls, buf: bytes) -> "Checkpoint":
        if buf[:8] != MAGIC:
            raise ValueError("not an ARIW checkpoint (bad magic)")
        version, hlen = struct.unpack_from("<IQ", buf, 8)
        if version != VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        start = 8 + struct.calcsize("<IQ")
        header = json.loads(buf[start : start + hlen].decode("utf-8"))
        base = start + hlen
        tensors = {}
        for rec in header["tensors"]:
            lo = base + rec["offset"]
            arr = np.frombuffer(buf, dtype=rec["dtype"], count=rec["nbytes"] // 4, offset=lo)
            tensors[rec["name"]] = arr.reshape(rec["shape"]).copy()
        cfg_text = "".join(f"{k} = {v}\n" for k, v in header["config"].items())
        return cls(
            config=parse_config(cfg_text),
            tensors=tensors,
            robust_weights=[float(w) for w in header["robust_weights_ema"]],
            step=int(header["step"]),
            rng=header.get("rng", {}),
        )

    def digest(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()


def checkpoint_bytes(model, step: int) -> bytes:
    return Checkpoint.from_model(model, step).to_bytes()


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    Path(path).write_bytes(ckpt.to_bytes())


def load_checkpoint(path) -> Checkpoint:
    return Checkpoint.from_bytes(Path(path).read_bytes())
