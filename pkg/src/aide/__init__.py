"""Hybrid-feature detector for AI-generated images.

Scores an image by fusing two complementary views: noise residuals of
the most and least high-frequency-loaded patches (selected by DCT band
grading) and a semantic whole-image embedding.
"""

__version__ = "0.1.0"

from .checkpoint import Checkpoint, load_checkpoint, restore_model, save_checkpoint
from .config import AideConfig, load_config
from .data import (
    DatasetManifest,
    ManifestRecord,
    SynthSpec,
    build_manifest,
    curate_manifest,
    load_manifest,
    make_synthetic_dataset,
    split_manifest,
)
from .embeddings import EmbeddingTable, load_embedding_table, write_embedding_table
from .evaluation import EvalReport, ablation_suite, evaluate, robustness_sweep
from .imageio import Patch, RgbImage, decode_image, load_image, patchify, resize_image
from .metrics import ScoredExample, accuracy_metrics, average_precision
from .network import VARIANTS, AideModel, ForwardResult
from .training import train_model

__all__ = [
    "AideConfig",
    "AideModel",
    "Checkpoint",
    "DatasetManifest",
    "EmbeddingTable",
    "EvalReport",
    "ForwardResult",
    "ManifestRecord",
    "Patch",
    "RgbImage",
    "ScoredExample",
    "SynthSpec",
    "VARIANTS",
    "ablation_suite",
    "accuracy_metrics",
    "average_precision",
    "build_manifest",
    "curate_manifest",
    "decode_image",
    "evaluate",
    "load_checkpoint",
    "load_config",
    "load_embedding_table",
    "load_image",
    "load_manifest",
    "make_synthetic_dataset",
    "patchify",
    "resize_image",
    "restore_model",
    "robustness_sweep",
    "save_checkpoint",
    "split_manifest",
    "train_model",
    "write_embedding_table",
]
