"""Training loop: batched BCE on manifest train records with augmentations.

Determinism contract: every random stream is derived from the config
seed alone. Parameter init uses (seed, init tag); the epoch-e shuffle
uses (seed, shuffle tag, e); the augmentation stream for train record j
in epoch e uses (seed, augment tag, e, j), and always draws the same
four values per image. A run interrupted at an epoch boundary and
resumed from its checkpoint is therefore bit-identical to an
uninterrupted run.
"""

from __future__ import annotations

import math
from dataclasses import replace

import numpy as np

from .checkpoint import Checkpoint, restore_model
from .config import AideConfig
from .data import DatasetManifest
from .errors import OptimizerError, TrainingError
from .imageio import load_image
from .network import AideModel
from .nn import AdamW, bce_with_logits
from .perturb import random_augment

_SHUFFLE_STREAM = 0x5F1E
_AUGMENT_STREAM = 0xA6E7

LABEL_VALUES = {"real": 0.0, "fake": 1.0}


def _check_resume(config: AideConfig, ckpt: Checkpoint, variant: str):
    if ckpt.variant != variant:
        raise TrainingError(
            f"cannot resume: checkpoint variant {ckpt.variant!r} != requested {variant!r}"
        )
    old = ckpt.config.to_dict()
    new = config.to_dict()
    old.pop("epochs")
    new.pop("epochs")
    if old != new:
        diff = sorted(k for k in new if old.get(k) != new.get(k))
        raise TrainingError(f"cannot resume: config fields differ: {diff}")
    if ckpt.epoch > config.epochs:
        raise TrainingError(
            f"checkpoint already has {ckpt.epoch} epochs, target is {config.epochs}"
        )


class _ImageCache:
    """Decoded images for repeated epochs; corpora here fit in memory."""

    def __init__(self, manifest: DatasetManifest):
        self.manifest = manifest
        self._cache = {}

    def get(self, record):
        img = self._cache.get(record.path)
        if img is None:
            img = load_image(self.manifest.resolve(record))
            self._cache[record.path] = img
        return img


def train_model(
    manifest: DatasetManifest,
    config: AideConfig,
    table=None,
    *,
    variant: str = "full",
    resume_from: Checkpoint | None = None,
    progress=None,
) -> Checkpoint:
    """Train on the manifest's train split and return the final checkpoint.

    `progress`, if given, is called as progress(epoch, mean_loss) after
    each epoch. `resume_from` must match the config in everything but
    the target epoch count.
    """
    records = manifest.split("train")
    if not records:
        raise TrainingError("train split is empty")
    labels = {r.label for r in records}
    if len(labels) < 2:
        raise TrainingError(f"train split contains only {labels.pop()!r} records")

    if config.semantic_source == "embedded_table":
        if table is None:
            raise TrainingError("embedded_table mode needs an embedding table")
        missing = [r.id for r in records if r.id not in table]
        if missing:
            raise TrainingError(
                f"{len(missing)} train record(s) missing from the embedding table, "
                f"first: {missing[:3]}"
            )
        table_dim = table.dim
    else:
        table_dim = None

    if resume_from is not None:
        _check_resume(config, resume_from, variant)
        model = restore_model(replace(resume_from, config=config))
        start_epoch = resume_from.epoch
        epoch_losses = list(resume_from.epoch_losses)
    else:
        model = AideModel(config, variant, table_dim=table_dim)
        start_epoch = 0
        epoch_losses = []

    optimizer = AdamW(model.named_params(), lr=config.lr)
    cache = _ImageCache(manifest)
    n = len(records)

    for epoch in range(start_epoch, config.epochs):
        perm = np.random.default_rng([config.seed, _SHUFFLE_STREAM, epoch]).permutation(n)
        loss_total = 0.0
        for batch_index, start in enumerate(range(0, n, config.batch_size)):
            batch = perm[start : start + config.batch_size]
            optimizer.zero_grad()
            inv = 1.0 / len(batch)
            for j in batch:
                record = records[int(j)]
                rng = np.random.default_rng(
                    [config.seed, _AUGMENT_STREAM, epoch, int(j)]
                )
                image = random_augment(cache.get(record), rng, config.augment_prob)
                result, ctx = model.forward_train(image, record.id, table)
                if not math.isfinite(result.logit):
                    raise OptimizerError(
                        f"non-finite logit at epoch {epoch}, batch {batch_index}"
                    )
                loss, dlogit = bce_with_logits(result.logit, LABEL_VALUES[record.label])
                loss_total += loss
                model.backward(ctx, dlogit * inv)
            optimizer.step()
        mean_loss = loss_total / n
        epoch_losses.append(mean_loss)
        if progress is not None:
            progress(epoch, mean_loss)

    return Checkpoint.from_model(model, config.epochs, epoch_losses)
