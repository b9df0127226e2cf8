"""Command-line interface.

Machine-readable output is JSON-lines on stdout; human summaries go to
stderr. Exit codes: 0 success, 1 usage, 2 data/format problem, 3
training or runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import load_checkpoint, save_checkpoint
from .config import AideConfig, load_config
from .data import (
    curate_manifest,
    load_manifest,
    make_synthetic_dataset,
    split_manifest,
    synth_spec_from_json,
)
from .embeddings import load_embedding_table
from .errors import (
    AideError,
    ArgumentError,
    OptimizerError,
    TrainingError,
)
from .evaluation import ablation_suite, evaluate
from .frequency import build_band_filter_bank, select_extreme_patches
from .imageio import load_image, patchify, save_image
from .network import AideModel
from .nn import (
    GELU,
    AvgPool2d,
    Conv2d,
    GlobalAvgPool,
    Linear,
    Param,
    ReLU,
    bce_with_logits,
    grad_check,
)
from .perturb import PerturbationSpec
from .training import train_model


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _emit(obj):
    sys.stdout.write(json.dumps(obj) + "\n")
    sys.stdout.flush()


def _say(message):
    sys.stderr.write(message + "\n")
    sys.stderr.flush()


def _common_options():
    common = _Parser(add_help=False)
    common.add_argument("--out-dir", default=".", help="directory for produced files")
    common.add_argument("--seed", type=int, default=None,
                        help="override the seed of the config or synth spec")
    common.add_argument("-v", "--verbose", action="store_true")
    return common


def build_parser() -> _Parser:
    parser = _Parser(prog="aide", description=__doc__)
    parser.add_argument("--version", action="version", version=f"aide {__version__}")
    common = [_common_options()]
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("synth", parents=common, help="render a synthetic corpus")
    p.add_argument("spec", help="JSON file with count_per_class/image_size/artifact/seed")
    p.add_argument("out", help="corpus output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("curate", parents=common, help="drop undecodable, small, duplicate images")
    p.add_argument("manifest")
    p.add_argument("--min-side", type=int, default=448)
    p.set_defaults(func=cmd_curate)

    p = sub.add_parser("split", parents=common, help="assign stratified train/val/test splits")
    p.add_argument("manifest")
    p.add_argument("--fractions", default="0.8,0.1,0.1",
                   help="comma-separated train,val,test fractions")
    p.add_argument("--split-seed", type=int, default=0, dest="split_seed")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", parents=common, help="train a detector on a manifest")
    p.add_argument("manifest")
    p.add_argument("--config", help="AideConfig JSON file (defaults apply if omitted)")
    p.add_argument("--embeddings", help="embedding table for embedded_table mode")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=common, help="evaluate a checkpoint on a manifest split")
    p.add_argument("checkpoint")
    p.add_argument("manifest")
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument("--embeddings")
    p.add_argument("--robustness", action="store_true",
                   help="add the JPEG/blur degradation sweep")
    p.add_argument("--ablation", action="store_true",
                   help="retrain branch-ablation variants and report their accuracy")
    p.add_argument("--hyper-sweep", action="store_true",
                   help="with --ablation: sweep patch_n and k_select")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("score", parents=common, help="score one image")
    p.add_argument("checkpoint")
    p.add_argument("image")
    p.add_argument("--embeddings")
    p.add_argument("--diagnostics", action="store_true",
                   help="include grades and selected patches")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("perturb", parents=common, help="apply one degradation and save as PNG")
    p.add_argument("image")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--jpeg", type=int, metavar="QF")
    group.add_argument("--blur", type=float, metavar="SIGMA")
    p.set_defaults(func=cmd_perturb)

    p = sub.add_parser("inspect-patches", parents=common,
                       help="grade patches and show the selected extremes")
    p.add_argument("image")
    p.add_argument("--config")
    p.set_defaults(func=cmd_inspect_patches)

    p = sub.add_parser("gradcheck", parents=common,
                       help="verify analytic gradients against finite differences")
    p.set_defaults(func=cmd_gradcheck)

    return parser


# -- subcommand implementations --------------------------------------------


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_synth(args) -> int:
    spec = synth_spec_from_json(args.spec)
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    manifest = make_synthetic_dataset(spec, args.out)
    for rec in manifest.records:
        _emit({"path": rec.path, "id": rec.id, "label": rec.label,
               "source": rec.source, "split": rec.split})
    _say(f"wrote {len(manifest)} images under {args.out} "
         f"(artifact {spec.artifact}, seed {spec.seed})")
    return 0


def cmd_curate(args) -> int:
    manifest = load_manifest(args.manifest)
    kept, report = curate_manifest(manifest, min_side=args.min_side)
    out_path = _out_dir(args) / "curated.jsonl"
    kept.save(out_path)
    for rec in kept.records:
        _emit({"path": rec.path, "id": rec.id, "label": rec.label,
               "source": rec.source, "split": rec.split})
    _say(f"kept {len(kept)} of {len(manifest)} records "
         f"(undecodable {report.count('undecodable')}, "
         f"small {report.count('resolution')}, "
         f"duplicate {report.count('duplicate')}); wrote {out_path}")
    if args.verbose:
        for entry in report.entries:
            _say(f"dropped {entry['path']}: {entry['reason']}")
    return 0


def cmd_split(args) -> int:
    manifest = load_manifest(args.manifest)
    try:
        fractions = tuple(float(x) for x in args.fractions.split(","))
    except ValueError as exc:
        raise UsageError(f"bad --fractions value {args.fractions!r}") from exc
    seed = args.split_seed if args.seed is None else args.seed
    result = split_manifest(manifest, fractions, seed)
    out_path = _out_dir(args) / "split.jsonl"
    result.save(out_path)
    for rec in result.records:
        _emit({"path": rec.path, "id": rec.id, "label": rec.label,
               "source": rec.source, "split": rec.split})
    counts = {name: len(result.split(name)) for name in ("train", "val", "test")}
    _say(f"split {len(result)} records into {counts}; wrote {out_path}")
    return 0


def cmd_train(args) -> int:
    manifest = load_manifest(args.manifest)
    config = load_config(args.config) if args.config else AideConfig()
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    table = load_embedding_table(args.embeddings) if args.embeddings else None
    resume = load_checkpoint(args.resume) if args.resume else None

    def progress(epoch, mean_loss):
        _emit({"event": "epoch", "epoch": epoch, "mean_loss": mean_loss})
        if args.verbose:
            _say(f"epoch {epoch}: mean loss {mean_loss:.6f}")

    started = time.perf_counter()
    ckpt = train_model(manifest, config, table, resume_from=resume, progress=progress)
    path = _out_dir(args) / "model.ckpt"
    save_checkpoint(ckpt, path)
    elapsed = time.perf_counter() - started
    _emit({"event": "checkpoint", "path": str(path), "epochs": ckpt.epoch,
           "final_loss": ckpt.epoch_losses[-1] if ckpt.epoch_losses else None})
    _say(f"trained {ckpt.epoch} epochs in {elapsed:.1f}s (lr {config.lr}, "
         f"batch {config.batch_size}); checkpoint at {path}")
    return 0


def cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    manifest = load_manifest(args.manifest)
    table = load_embedding_table(args.embeddings) if args.embeddings else None
    report = evaluate(ckpt, manifest, split=args.split, table=table,
                      with_robustness=args.robustness)
    if args.ablation:
        def progress(msg):
            _say(msg)

        report.ablation = ablation_suite(
            manifest, ckpt.config, table,
            hyper_sweep=args.hyper_sweep,
            progress=progress if args.verbose else None,
        )
    out = _out_dir(args)
    json_path = out / "report.json"
    csv_path = out / "report.csv"
    json_path.write_text(report.to_json(), encoding="utf-8")
    csv_path.write_text(report.to_csv(), encoding="utf-8")
    _emit({"event": "report", "path": str(json_path), "csv": str(csv_path),
           "split": report.split, "n_scored": report.n_scored,
           "overall_acc": report.overall_acc, "ap": report.ap})
    _say(f"accuracy {report.overall_acc} on {report.n_scored} {args.split} records; "
         f"wrote {json_path} and {csv_path}")
    return 0


def cmd_score(args) -> int:
    from .checkpoint import restore_model

    ckpt = load_checkpoint(args.checkpoint)
    model = restore_model(ckpt)
    table = load_embedding_table(args.embeddings) if args.embeddings else None
    image = load_image(args.image)
    result = model.forward(image, args.image, table)
    line = {
        "id": args.image,
        "probability": result.probability,
        "logit": result.logit,
        "verdict": "fake" if result.probability >= 0.5 else "real",
    }
    if args.diagnostics:
        diag = result.diagnostics
        line["grades"] = list(diag.grades) if diag.grades is not None else None
        line["max_patches"] = [
            {"linear_index": p.linear_index, "grid_row": p.grid_row,
             "grid_col": p.grid_col, "grade": p.grade}
            for p in diag.max_patches
        ]
        line["min_patches"] = [
            {"linear_index": p.linear_index, "grid_row": p.grid_row,
             "grid_col": p.grid_col, "grade": p.grade}
            for p in diag.min_patches
        ]
    _emit(line)
    _say(f"{args.image}: p(fake) = {result.probability:.4f}")
    return 0


def cmd_perturb(args) -> int:
    image = load_image(args.image)
    if args.jpeg is not None:
        spec = PerturbationSpec("jpeg", args.jpeg)
    else:
        spec = PerturbationSpec("blur", args.blur)
    out = _out_dir(args) / f"{Path(args.image).stem}.{spec.label()}.png"
    save_image(spec.apply(image), out)
    _emit({"event": "perturbed", "kind": spec.kind, "param": spec.param,
           "path": str(out)})
    _say(f"wrote {out}")
    return 0


def cmd_inspect_patches(args) -> int:
    config = load_config(args.config) if args.config else AideConfig()
    image = load_image(args.image)
    bank = build_band_filter_bank(config.patch_n, config.k_bands)
    patches = patchify(image, config.patch_n)
    selection = select_extreme_patches(patches, bank, config.k_select)

    def info(indices):
        return [
            {"linear_index": patches[i].linear_index,
             "grid_row": patches[i].grid_row,
             "grid_col": patches[i].grid_col,
             "grade": selection.grades[i]}
            for i in indices
        ]

    _emit({
        "id": args.image,
        "patch_n": config.patch_n,
        "k_bands": config.k_bands,
        "k_select": config.k_select,
        "grades": list(selection.grades),
        "max_patches": info(selection.max_indices),
        "min_patches": info(selection.min_indices),
    })
    _say(f"{len(patches)} patches; grades span "
         f"[{min(selection.grades):.2f}, {max(selection.grades):.2f}]")
    return 0


def _layer_checks(rng):
    """Seeded per-layer closures for the gradient suite."""
    checks = []

    def projected(layer, x_shape, low=-1.0, high=1.0):
        x = rng.uniform(low, high, size=x_shape)
        inp = Param(x)
        y0, _ = layer.forward(inp.value)
        r = rng.normal(size=np.shape(y0))

        def loss_fn():
            y, ctx = layer.forward(inp.value)
            inp.grad += layer.backward(ctx, r)
            return float(np.sum(y * r))

        params = {"input": inp}
        if hasattr(layer, "params"):
            params.update(layer.params())
        return params, loss_fn

    checks.append(("conv2d_s1p1", *projected(Conv2d(2, 3, 3, rng, stride=1, pad=1), (2, 5, 5))))
    checks.append(("conv2d_s2p0", *projected(Conv2d(3, 2, 3, rng, stride=2, pad=0), (3, 7, 7))))
    checks.append(("linear", *projected(Linear(6, 4, rng), (5, 6))))
    relu_layer = ReLU()
    x = rng.uniform(0.2, 1.0, size=(4, 4)) * rng.choice([-1.0, 1.0], size=(4, 4))
    relu_inp = Param(x)
    r_relu = rng.normal(size=(4, 4))

    def relu_loss():
        y, ctx = relu_layer.forward(relu_inp.value)
        relu_inp.grad += relu_layer.backward(ctx, r_relu)
        return float(np.sum(y * r_relu))

    checks.append(("relu", {"input": relu_inp}, relu_loss))
    checks.append(("gelu", *projected(GELU(), (4, 4), low=-2.0, high=2.0)))
    checks.append(("avgpool2x2", *projected(AvgPool2d(), (2, 6, 6))))
    checks.append(("global_avgpool", *projected(GlobalAvgPool(), (3, 4, 4))))
    return checks


def _model_check(rng):
    """End-to-end: raw fusion logit of a small model on one image."""
    from .imageio import RgbImage

    config = AideConfig(
        patch_n=8, k_bands=4, k_select=1, patch_resize=8, encoder_dim=8,
        semantic_dim=8, semantic_input_size=8, fusion_hidden=8,
    )
    model = AideModel(config)
    pixels = rng.integers(0, 256, size=(16, 16, 3), dtype=np.uint8)
    image = RgbImage(pixels)

    def loss_fn():
        result, ctx = model.forward_train(image)
        model.backward(ctx, 1.0)
        return result.logit

    return model.named_params(), loss_fn


def run_gradient_suite(emit=None):
    """Shared by the CLI and the test suite. Returns overall max rel error."""
    rng = np.random.default_rng(20240814)
    worst = 0.0
    all_passed = True
    for name, params, loss_fn in _layer_checks(rng):
        result = grad_check(loss_fn, params, tolerance=1e-6)
        worst = max(worst, result.max_rel_error)
        all_passed = all_passed and result.passed
        if emit is not None:
            emit({"check": name, "max_rel_error": result.max_rel_error,
                  "entries": result.entries_checked, "passed": result.passed})
    params, loss_fn = _model_check(rng)
    result = grad_check(loss_fn, params, tolerance=1e-6,
                        max_entries_per_param=2, rng=rng)
    worst = max(worst, result.max_rel_error)
    all_passed = all_passed and result.passed
    if emit is not None:
        emit({"check": "model_end_to_end", "max_rel_error": result.max_rel_error,
              "entries": result.entries_checked, "passed": result.passed})
    return worst, all_passed


def cmd_gradcheck(args) -> int:
    worst, passed = run_gradient_suite(emit=_emit)
    _emit({"event": "summary", "max_rel_error": worst, "passed": passed})
    _say(f"gradient suite max relative error {worst:.3e}")
    if not passed:
        raise TrainingError(f"gradient check failed with max rel error {worst:.3e}")
    return 0


# -- dispatch ----------------------------------------------------------------


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        _say(f"usage error: {exc}")
        return 1
    if not getattr(args, "func", None):
        parser.print_help(sys.stderr)
        return 1
    try:
        return args.func(args)
    except UsageError as exc:
        _say(f"usage error: {exc}")
        return 1
    except (TrainingError, OptimizerError) as exc:
        _say(f"training error: {exc}")
        return 3
    except AideError as exc:
        _say(f"error: {exc}")
        return 2
    except OSError as exc:
        _say(f"error: {exc}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
