"""Model and training configuration.

AideConfig serializes to a flat JSON object whose keys mirror the field
names exactly. Unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .errors import ConfigError

SEMANTIC_SOURCES = ("tiny_encoder", "embedded_table")


@dataclass(frozen=True)
class AideConfig:
    patch_n: int = 32  # patch side length for the grading grid
    k_bands: int = 6  # number of anti-diagonal frequency bands
    k_select: int = 2  # patches kept at each grade extreme
    patch_resize: int = 64  # selected patches are resampled to this side
    encoder_dim: int = 128  # patch-branch embedding width
    semantic_dim: int = 128  # semantic embedding width after projection
    semantic_source: str = "tiny_encoder"
    semantic_input_size: int = 64  # tiny-encoder input side
    fusion_hidden: int = 128
    clamp_t: float = 2.0  # residual truncation threshold
    seed: int = 0
    lr: float = 1e-4
    batch_size: int = 32
    epochs: int = 5
    augment_prob: float = 0.1
    srm_kernels: tuple | None = None  # optional [[5x5 ints], normalizer] pairs

    def __post_init__(self):
        def positive(name):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")

        for name in ("patch_n", "k_bands", "k_select", "patch_resize", "encoder_dim",
                     "semantic_dim", "semantic_input_size", "fusion_hidden", "clamp_t",
                     "lr", "batch_size", "epochs"):
            positive(name)
        if self.k_bands > 2 * self.patch_n - 1:
            raise ConfigError(
                f"k_bands={self.k_bands} exceeds the {2 * self.patch_n - 1} anti-diagonals "
                f"of a {self.patch_n}x{self.patch_n} plane"
            )
        if self.semantic_source not in SEMANTIC_SOURCES:
            raise ConfigError(
                f"semantic_source must be one of {SEMANTIC_SOURCES}, "
                f"got {self.semantic_source!r}"
            )
        if not 0.0 <= self.augment_prob <= 1.0:
            raise ConfigError(f"augment_prob must be in [0, 1], got {self.augment_prob}")
        if self.srm_kernels is not None:
            frozen = tuple(
                (tuple(tuple(int(v) for v in row) for row in matrix), float(norm))
                for matrix, norm in self.srm_kernels
            )
            object.__setattr__(self, "srm_kernels", frozen)

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["srm_kernels"] is not None:
            d["srm_kernels"] = [
                [[list(row) for row in matrix], norm] for matrix, norm in d["srm_kernels"]
            ]
        return d

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")
        return path


def config_from_dict(obj: dict) -> AideConfig:
    if not isinstance(obj, dict):
        raise ConfigError(f"config must be a JSON object, got {type(obj).__name__}")
    known = {f.name for f in fields(AideConfig)}
    unknown = set(obj) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        return AideConfig(**obj)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> AideConfig:
    path = Path(path)
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return config_from_dict(obj)
