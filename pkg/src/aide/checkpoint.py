"""Binary checkpoint format.

Layout:

    magic          8 bytes  b"AIDECKPT"
    version        u16 little-endian (currently 1)
    header_length  u32 little-endian
    header         header_length bytes of UTF-8 JSON
    payload        tensor data, float64 little-endian, back to back

The header holds the config, variant, seed, epoch counter, per-epoch
training losses, per-parameter optimizer step counts, and a tensor
directory: a list of {name, shape, offset} with offsets relative to the
payload start, in payload order. Parameter values and both AdamW moment
tensors are all stored, so training resumes exactly.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import AideConfig, config_from_dict
from .errors import CheckpointError
from .network import VARIANTS, AideModel

MAGIC = b"AIDECKPT"
VERSION = 1


@dataclass
class Checkpoint:
    config: AideConfig
    variant: str
    seed: int
    epoch: int  # epochs completed
    epoch_losses: list
    tensors: dict  # name -> float64 ndarray
    step_counts: dict  # param name -> int

    @classmethod
    def from_model(cls, model: AideModel, epoch: int, epoch_losses) -> "Checkpoint":
        tensors = {}
        step_counts = {}
        for name, p in model.named_params().items():
            tensors[f"{name}.value"] = p.value.copy()
            tensors[f"{name}.m"] = p.m.copy()
            tensors[f"{name}.v"] = p.v.copy()
            step_counts[name] = p.step_count
        return cls(
            config=model.config,
            variant=model.variant,
            seed=model.config.seed,
            epoch=epoch,
            epoch_losses=list(epoch_losses),
            tensors=tensors,
            step_counts=step_counts,
        )

    def table_dim(self) -> int | None:
        if self.config.semantic_source != "embedded_table":
            return None
        w = self.tensors.get("semantic.g.weight.value")
        if w is None:
            raise CheckpointError("checkpoint is missing semantic.g.weight.value")
        return int(w.shape[1])


def restore_model(ckpt: Checkpoint) -> AideModel:
    """Rebuild an AideModel carrying the checkpoint's exact state."""
    model = AideModel(ckpt.config, ckpt.variant, table_dim=ckpt.table_dim())
    for name, p in model.named_params().items():
        for suffix, target in ((".value", "value"), (".m", "m"), (".v", "v")):
            stored = ckpt.tensors.get(name + suffix)
            if stored is None:
                raise CheckpointError(f"checkpoint is missing tensor {name + suffix}")
            if stored.shape != getattr(p, target).shape:
                raise CheckpointError(
                    f"tensor {name + suffix} has shape {stored.shape}, "
                    f"model expects {getattr(p, target).shape}"
                )
            setattr(p, target, stored.copy())
        if name not in ckpt.step_counts:
            raise CheckpointError(f"checkpoint is missing step count for {name}")
        p.step_count = int(ckpt.step_counts[name])
    return model


def save_checkpoint(ckpt: Checkpoint, path) -> Path:
    path = Path(path)
    directory = []
    offset = 0
    payload = []
    for name in sorted(ckpt.tensors):
        arr = np.ascontiguousarray(ckpt.tensors[name], dtype="<f8")
        directory.append({"name": name, "shape": list(arr.shape), "offset": offset})
        payload.append(arr.tobytes())
        offset += arr.nbytes
    header = {
        "config": ckpt.config.to_dict(),
        "variant": ckpt.variant,
        "seed": ckpt.seed,
        "epoch": ckpt.epoch,
        "epoch_losses": [float(x) for x in ckpt.epoch_losses],
        "step_counts": {k: int(v) for k, v in sorted(ckpt.step_counts.items())},
        "tensors": directory,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<H", VERSION))
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        for chunk in payload:
            fh.write(chunk)
    return path


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    data = path.read_bytes()
    head_len = len(MAGIC) + 2 + 4
    if len(data) < head_len:
        raise CheckpointError(f"{path}: file too short for header")
    if data[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {data[:8]!r}")
    (version,) = struct.unpack_from("<H", data, len(MAGIC))
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    (header_length,) = struct.unpack_from("<I", data, len(MAGIC) + 2)
    if head_len + header_length > len(data):
        raise CheckpointError(f"{path}: declared header length {header_length} overruns file")
    try:
        header = json.loads(data[head_len : head_len + header_length].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: header is not valid JSON: {exc}") from exc
    for key in ("config", "variant", "seed", "epoch", "epoch_losses", "step_counts", "tensors"):
        if key not in header:
            raise CheckpointError(f"{path}: header is missing {key!r}")
    if header["variant"] not in VARIANTS:
        raise CheckpointError(f"{path}: unknown variant {header['variant']!r}")
    config = config_from_dict(header["config"])

    payload = data[head_len + header_length :]
    tensors = {}
    expected_offset = 0
    for entry in header["tensors"]:
        name, shape, offset = entry["name"], tuple(entry["shape"]), entry["offset"]
        if offset != expected_offset:
            raise CheckpointError(
                f"{path}: tensor {name} declares offset {offset}, expected {expected_offset}"
            )
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        nbytes = count * 8
        if offset + nbytes > len(payload):
            raise CheckpointError(f"{path}: tensor {name} overruns payload")
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=offset)
        tensors[name] = arr.reshape(shape).copy()
        expected_offset = offset + nbytes
    if expected_offset != len(payload):
        raise CheckpointError(
            f"{path}: {len(payload) - expected_offset} trailing payload bytes"
        )
    return Checkpoint(
        config=config,
        variant=header["variant"],
        seed=int(header["seed"]),
        epoch=int(header["epoch"]),
        epoch_losses=[float(x) for x in header["epoch_losses"]],
        tensors=tensors,
        step_counts={k: int(v) for k, v in header["step_counts"].items()},
    )
