"""Evaluation harness: scoring, reports, robustness sweeps, ablations.

A report is deterministic given checkpoint and manifest except for its
timestamp; comparable_dict() drops the timestamp for equality checks.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, replace
from datetime import datetime, timezone

from ._threads import ordered_map
from .checkpoint import Checkpoint, restore_model
from .config import AideConfig
from .data import DatasetManifest
from .errors import ArgumentError, EmptyPatchGridError, InsufficientPatchesError
from .imageio import load_image
from .metrics import FAKE, ScoredExample, accuracy_metrics, average_precision
from .network import VARIANTS, AideModel
from .perturb import PerturbationSpec
from .training import train_model

ROBUSTNESS_CELLS = (
    PerturbationSpec("jpeg", 95),
    PerturbationSpec("jpeg", 90),
    PerturbationSpec("jpeg", 75),
    PerturbationSpec("jpeg", 50),
    PerturbationSpec("blur", 1.0),
    PerturbationSpec("blur", 2.0),
    PerturbationSpec("blur", 3.0),
    PerturbationSpec("blur", 4.0),
)

HYPER_SWEEP_PATCH_N = (16, 32, 64)
HYPER_SWEEP_K_SELECT = (1, 2, 4)


@dataclass
class EvalReport:
    split: str
    variant: str
    n_scored: int
    overall_acc: float | None
    real_acc: float | None
    fake_acc: float | None
    ap: float | None
    per_source: dict
    skipped: dict
    robustness: dict | None
    ablation: dict | None
    config: dict
    timestamp: str

    def to_dict(self) -> dict:
        return asdict(self)

    def comparable_dict(self) -> dict:
        d = self.to_dict()
        d.pop("timestamp")
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        """Flat metric,value rows for spreadsheet import."""
        rows = [("metric", "value")]
        for key in ("split", "variant", "n_scored", "overall_acc", "real_acc",
                    "fake_acc", "ap"):
            rows.append((key, getattr(self, key)))
        rows.append(("skipped_count", self.skipped["count"]))
        for source in sorted(self.per_source):
            stats = self.per_source[source]
            for metric in ("n", "acc", "ap"):
                rows.append((f"per_source.{source}.{metric}", stats[metric]))
        if self.robustness is not None:
            for cell in self.robustness:
                rows.append((f"robustness.{cell}.acc", self.robustness[cell]["acc"]))
        if self.ablation is not None:
            for name in self.ablation:
                entry = self.ablation[name]
                value = entry.get("acc", entry.get("skipped"))
                rows.append((f"ablation.{name}.acc", value))
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerows(rows)
        return buf.getvalue()


def _as_model(model_or_ckpt) -> AideModel:
    if isinstance(model_or_ckpt, Checkpoint):
        return restore_model(model_or_ckpt)
    if isinstance(model_or_ckpt, AideModel):
        return model_or_ckpt
    raise ArgumentError(
        f"expected a Checkpoint or AideModel, got {type(model_or_ckpt).__name__}"
    )


def score_records(model: AideModel, manifest: DatasetManifest, records, table=None,
                  perturbation: PerturbationSpec | None = None):
    """Score records (optionally perturbed first). Returns (scored, skipped_ids).

    Records whose id is missing from the table in embedded_table mode
    are skipped and reported, not fatal.
    """
    need_table = (
        model.uses_semantic and model.config.semantic_source == "embedded_table"
    )
    if need_table and table is None:
        raise ArgumentError("embedded_table mode needs an embedding table")
    skipped = []
    usable = []
    for rec in records:
        if need_table and rec.id not in table:
            skipped.append(rec.id)
        else:
            usable.append(rec)

    def score_one(rec):
        image = load_image(manifest.resolve(rec))
        if perturbation is not None:
            image = perturbation.apply(image)
        result = model.forward(image, rec.id, table)
        label = FAKE if rec.label == "fake" else 0
        return ScoredExample(rec.id, label, result.probability, rec.source)

    return ordered_map(score_one, usable), skipped


def _source_stats(scored) -> dict:
    by_source = {}
    for ex in scored:
        by_source.setdefault(ex.source, []).append(ex)
    out = {}
    for source, group in sorted(by_source.items()):
        acc = accuracy_metrics(group)
        has_pos = any(ex.label == FAKE for ex in group)
        out[source] = {
            "n": len(group),
            "acc": acc.overall if acc.overall is not None
                   else (acc.fake_acc if acc.fake_acc is not None else acc.real_acc),
            "ap": average_precision(group) if has_pos else None,
        }
    return out


def evaluate(model_or_ckpt, manifest: DatasetManifest, split: str = "test",
             table=None, with_robustness: bool = False) -> EvalReport:
    """Score a manifest split and aggregate the standard report."""
    model = _as_model(model_or_ckpt)
    records = manifest.split(split)
    if not records:
        raise ArgumentError(f"manifest has no records in split {split!r}")
    scored, skipped = score_records(model, manifest, records, table)
    if not scored:
        raise ArgumentError(f"every record in split {split!r} was skipped")
    acc = accuracy_metrics(scored)
    has_pos = any(ex.label == FAKE for ex in scored)
    robustness = None
    if with_robustness:
        robustness = robustness_sweep(model, manifest, split, table)
    return EvalReport(
        split=split,
        variant=model.variant,
        n_scored=len(scored),
        overall_acc=acc.overall,
        real_acc=acc.real_acc,
        fake_acc=acc.fake_acc,
        ap=average_precision(scored) if has_pos else None,
        per_source=_source_stats(scored),
        skipped={"count": len(skipped), "ids": skipped},
        robustness=robustness,
        ablation=None,
        config=model.config.to_dict(),
        timestamp=datetime.now(timezone.utc).isoformat(),
    )


def robustness_sweep(model_or_ckpt, manifest: DatasetManifest, split: str = "test",
                     table=None) -> dict:
    """Accuracy per perturbation cell: baseline, JPEG qf 95/90/75/50,
    blur sigma 1/2/3/4."""
    model = _as_model(model_or_ckpt)
    records = manifest.split(split)
    if not records:
        raise ArgumentError(f"manifest has no records in split {split!r}")
    out = {}
    scored, _ = score_records(model, manifest, records, table)
    out["baseline"] = {"acc": accuracy_metrics(scored).overall, "n": len(scored)}
    for cell in ROBUSTNESS_CELLS:
        scored, _ = score_records(model, manifest, records, table, perturbation=cell)
        out[cell.label()] = {"acc": accuracy_metrics(scored).overall, "n": len(scored)}
    return out


def ablation_suite(manifest: DatasetManifest, config: AideConfig, table=None,
                   variants=VARIANTS, hyper_sweep: bool = False,
                   progress=None) -> dict:
    """Retrain per branch-ablation variant (identical seed/data) and
    evaluate each on the test split.

    With hyper_sweep=True two one-dimensional sweeps of the full model
    are appended: patch_n over {16, 32, 64} and k_select over {1, 2, 4},
    holding everything else at the given config. Sweep points that do
    not fit the corpus geometry are recorded as skipped.
    """
    results = {}
    for variant in variants:
        if variant not in VARIANTS:
            raise ArgumentError(f"unknown variant {variant!r}")
        results[variant] = _train_and_eval(manifest, config, variant, table, progress)
    if hyper_sweep:
        for patch_n in HYPER_SWEEP_PATCH_N:
            cfg = replace(config, patch_n=patch_n)
            results[f"patch_n={patch_n}"] = _train_and_eval(
                manifest, cfg, "full", table, progress
            )
        for k_select in HYPER_SWEEP_K_SELECT:
            cfg = replace(config, k_select=k_select)
            results[f"k_select={k_select}"] = _train_and_eval(
                manifest, cfg, "full", table, progress
            )
    return results


def _train_and_eval(manifest, config, variant, table, progress):
    if progress is not None:
        progress(f"training {variant} (patch_n={config.patch_n}, "
                 f"k_select={config.k_select})")
    try:
        ckpt = train_model(manifest, config, table, variant=variant)
    except (InsufficientPatchesError, EmptyPatchGridError) as exc:
        return {"skipped": str(exc)}
    report = evaluate(ckpt, manifest, "test", table)
    return {"acc": report.overall_acc, "ap": report.ap}
