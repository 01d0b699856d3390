"""Single-file checkpoints: JSON manifest header plus raw float64 payload.

Bit-exactness is the contract: arrays are stored as little-endian
64-bit floats exactly as they sit in memory, so save -> load -> forward
reproduces pre-save outputs bit for bit.
"""
from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .config import ModelConfig
from .model import Model
from .numerics import AdamState

MAGIC = b"VLXCKPT1"
FORMAT_VERSION = 1
STAGES = ("pretrain", "stage1", "stage2")


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    stage: str
    config: ModelConfig
    params: dict[str, np.ndarray]
    frozen: list[str]
    optimizer: AdamState | None


def _flatten_arrays(
    params: dict[str, np.ndarray], opt: AdamState | None
) -> list[tuple[str, np.ndarray]]:
    entries = [(name, params[name]) for name in params]
    if opt is not None:
        for name in sorted(opt.m):
            entries.append((f"adam.m.{name}", opt.m[name]))
        for name in sorted(opt.v):
            entries.append((f"adam.v.{name}", opt.v[name]))
    return entries


def save_checkpoint(
    path: str | Path,
    stage: str,
    model: Model,
    optimizer: AdamState | None = None,
    force: bool = False,
):
    if stage not in STAGES:
        raise CheckpointError(f"stage must be one of {STAGES}, got {stage!r}")
    path = Path(path)
    if path.exists() and not force:
        raise FileExistsError(f"refusing to overwrite {path} (use --force)")
    params = model.store.state_arrays()
    entries = _flatten_arrays(params, optimizer)
    manifest = []
    offset = 0
    for name, arr in entries:
        count = int(arr.size)
        manifest.append(
            {"name": name, "shape": list(arr.shape), "offset": offset, "count": count}
        )
        offset += count * 8
    header = {
        "format_version": FORMAT_VERSION,
        "stage": stage,
        "config": asdict(model.cfg),
        "frozen": sorted(model.store.frozen),
        "manifest": manifest,
        "optimizer": None
        if optimizer is None
        else {
            "lr": optimizer.lr,
            "beta1": optimizer.beta1,
            "beta2": optimizer.beta2,
            "eps": optimizer.eps,
            "step": optimizer.step,
            "group_lrs": optimizer.group_lrs,
            "decay_steps": optimizer.decay_steps,
        },
    }
    blob = json.dumps(header).encode("utf-8")
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for _, arr in entries:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    raw = path.read_bytes()
    if raw[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint (bad magic)")
    (header_len,) = struct.unpack("<Q", raw[len(MAGIC): len(MAGIC) + 8])
    start = len(MAGIC) + 8
    header = json.loads(raw[start: start + header_len].decode("utf-8"))
    if header["format_version"] != FORMAT_VERSION:
        raise CheckpointError(f"unsupported format version {header['format_version']}")
    payload = raw[start + header_len:]
    arrays: dict[str, np.ndarray] = {}
    for entry in header["manifest"]:
        lo = entry["offset"]
        hi = lo + entry["count"] * 8
        arrays[entry["name"]] = (
            np.frombuffer(payload[lo:hi], dtype="<f8").reshape(entry["shape"]).copy()
        )
    opt_blob = header["optimizer"]
    optimizer = None
    if opt_blob is not None:
        optimizer = AdamState(
            lr=opt_blob["lr"],
            beta1=opt_blob["beta1"],
            beta2=opt_blob["beta2"],
            eps=opt_blob["eps"],
            step=opt_blob["step"],
            group_lrs=dict(opt_blob["group_lrs"]),
            decay_steps=opt_blob["decay_steps"],
            m={
                n[len("adam.m."):]: a
                for n, a in arrays.items()
                if n.startswith("adam.m.")
            },
            v={
                n[len("adam.v."):]: a
                for n, a in arrays.items()
                if n.startswith("adam.v.")
            },
        )
    params = {n: a for n, a in arrays.items() if not n.startswith("adam.")}
    return Checkpoint(
        stage=header["stage"],
        config=ModelConfig(**header["config"]),
        params=params,
        frozen=list(header["frozen"]),
        optimizer=optimizer,
    )


def build_model(ck: Checkpoint) -> Model:
    """Reconstruct a model carrying the checkpoint's exact parameters."""
    model = Model(ck.config)
    model.store.load_arrays(ck.params)
    if ck.frozen:
        model.store.freeze(ck.frozen)
    return model
