"""Dataset manifests, curation, splitting, and the synthetic corpus.

A manifest is JSON-lines, one record per line with keys path, id, label,
source, split, ordered lexicographically by path. Paths are stored
relative to the manifest's own directory so a corpus tree is relocatable.

The synthetic corpus provides ground truth with controllable artifacts:

* real: a smooth gray gradient (bilinear blend of four random corner
  values in [75, 180], shared by all channels) plus per-pixel Gaussian
  sensor noise (sigma 6 on the [0, 255] scale, truncated at 5 sigma).
* spectral fake: the same construction downsampled 2x and upsampled
  back bilinearly, which suppresses the high-frequency noise field but
  leaves the image looking unchanged at a glance.
* semantic fake: the real construction with a fixed 16x16 sentinel
  added at a random location: a smooth flat-topped integer plateau put
  on the red channel and taken off the green channel. Channel sums are
  preserved pixel for pixel, so channel-pooling noise residuals cannot
  see the stamp, while any channel-aware observer can.
* both: downsample-upsample first, then stamp.
"""

from __future__ import annotations

import hashlib
import json
import os
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ArgumentError, ManifestError
from .imageio import RgbImage, load_image, save_image

LABELS = ("real", "fake")
SPLITS = ("train", "val", "test")
_MANIFEST_KEYS = ("path", "id", "label", "source", "split")
IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg")

SENTINEL_SIZE = 16
SENTINEL_PEAK = 45
GRADIENT_LOW, GRADIENT_HIGH = 75.0, 180.0
NOISE_SIGMA = 6.0
# noise is truncated at 5 sigma so base + noise + sentinel never clips
_NOISE_LIMIT = 5.0 * NOISE_SIGMA


@dataclass(frozen=True)
class ManifestRecord:
    path: str  # relative to the manifest root, posix separators
    id: str
    label: str
    source: str
    split: str

    def __post_init__(self):
        if self.label not in LABELS:
            raise ManifestError(f"label must be one of {LABELS}, got {self.label!r}")
        if self.split not in SPLITS:
            raise ManifestError(f"split must be one of {SPLITS}, got {self.split!r}")

    def to_json(self) -> str:
        return json.dumps(
            {k: getattr(self, k) for k in _MANIFEST_KEYS}, separators=(", ", ": ")
        )


@dataclass
class DatasetManifest:
    """An ordered set of records plus the root that relative paths resolve against."""

    records: list
    root: Path

    def __post_init__(self):
        self.root = Path(self.root)
        self.records = sorted(self.records, key=lambda r: r.path)
        seen = {}
        for rec in self.records:
            if rec.path in seen:
                raise ManifestError(f"duplicate path in manifest: {rec.path}")
            seen[rec.path] = rec

    def __len__(self):
        return len(self.records)

    def resolve(self, record: ManifestRecord) -> Path:
        return self.root / record.path

    def split(self, name: str) -> list:
        if name not in SPLITS:
            raise ArgumentError(f"split must be one of {SPLITS}, got {name!r}")
        return [r for r in self.records if r.split == name]

    def save(self, path) -> Path:
        """Write JSON lines; paths are re-anchored to the file's directory."""
        path = Path(path)
        target = path.parent.resolve()
        root = self.root.resolve()
        records = self.records
        if target != root:
            records = [
                replace(r, path=Path(os.path.relpath(root / r.path, target)).as_posix())
                for r in self.records
            ]
        lines = [r.to_json() for r in sorted(records, key=lambda r: r.path)]
        path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
        return path


def load_manifest(path, *, check_paths: bool = True) -> DatasetManifest:
    """Parse a JSON-lines manifest; malformed lines name their line number."""
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"manifest file not found: {path}")
    records = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
        if not isinstance(obj, dict) or set(obj) != set(_MANIFEST_KEYS):
            raise ManifestError(
                f"{path}:{lineno}: expected exactly the keys {list(_MANIFEST_KEYS)}"
            )
        try:
            records.append(ManifestRecord(**obj))
        except ManifestError as exc:
            raise ManifestError(f"{path}:{lineno}: {exc}") from exc
    manifest = DatasetManifest(records, path.parent)
    if check_paths:
        for rec in manifest.records:
            if not manifest.resolve(rec).is_file():
                raise ManifestError(f"{path}: missing image file {rec.path}")
    return manifest


def build_manifest(root) -> DatasetManifest:
    """Scan root/real and root/fake for images; default every record to train.

    The source tag is the name of the directory one level below the
    class directory when the file is nested, else "unknown".
    """
    root = Path(root)
    if not (root / "real").is_dir() and not (root / "fake").is_dir():
        raise ManifestError(
            f"{root} has neither a real/ nor a fake/ subdirectory"
        )
    records = []
    for label in LABELS:
        class_dir = root / label
        if not class_dir.is_dir():
            continue
        for file in sorted(class_dir.rglob("*")):
            if not file.is_file() or file.suffix.lower() not in IMAGE_EXTENSIONS:
                continue
            rel = file.relative_to(root).as_posix()
            inner = file.relative_to(class_dir)
            source = inner.parts[0] if len(inner.parts) > 1 else "unknown"
            records.append(
                ManifestRecord(path=rel, id=rel, label=label, source=source, split="train")
            )
    return DatasetManifest(records, root)


@dataclass
class DropReport:
    """Records removed by curation, with one reason each."""

    entries: list = field(default_factory=list)

    def add(self, record: ManifestRecord, reason: str):
        self.entries.append({"id": record.id, "path": record.path, "reason": reason})

    def count(self, reason=None) -> int:
        if reason is None:
            return len(self.entries)
        return sum(1 for e in self.entries if e["reason"] == reason)


def curate_manifest(manifest: DatasetManifest, min_side: int = 448):
    """Drop undecodable files, images under min_side, and pixel-exact duplicates.

    Duplicates are detected by SHA-256 over the decoded dimensions and
    raw RGB bytes, so re-encoded copies of the same pixels collapse.
    The first record in manifest order wins. Returns (kept, DropReport).
    """
    report = DropReport()
    kept = []
    seen_hashes = {}
    for rec in manifest.records:
        try:
            img = load_image(manifest.resolve(rec))
        except Exception:
            report.add(rec, "undecodable")
            continue
        if min(img.width, img.height) < min_side:
            report.add(rec, "resolution")
            continue
        digest = hashlib.sha256()
        digest.update(img.width.to_bytes(4, "little"))
        digest.update(img.height.to_bytes(4, "little"))
        digest.update(img.pixels.tobytes())
        key = digest.hexdigest()
        if key in seen_hashes:
            report.add(rec, "duplicate")
            continue
        seen_hashes[key] = rec.path
        kept.append(rec)
    return DatasetManifest(kept, manifest.root), report


def split_manifest(manifest: DatasetManifest, fractions, seed: int) -> DatasetManifest:
    """Assign splits stratified by (label, source).

    fractions is a (train, val, test) triple summing to 1. Within each
    stratum the target counts are floor(fraction * n) with leftovers
    going to the largest fractional remainders (ties favor train, then
    val). Strata smaller than 3 records get a warning, not an error.
    """
    fr = tuple(float(f) for f in fractions)
    if len(fr) != 3 or any(f < 0 for f in fr) or abs(sum(fr) - 1.0) > 1e-9:
        raise ArgumentError(
            f"fractions must be three non-negative values summing to 1, got {fractions}"
        )
    strata = {}
    for rec in manifest.records:
        strata.setdefault((rec.label, rec.source), []).append(rec)
    rng = np.random.default_rng(seed)
    assigned = {}
    for key in sorted(strata):
        recs = strata[key]
        n = len(recs)
        if n < 3:
            warnings.warn(
                f"stratum {key} has only {n} record(s); split will be degenerate",
                stacklevel=2,
            )
        counts = [int(f * n) for f in fr]
        remainders = [f * n - c for f, c in zip(fr, counts)]
        for _ in range(n - sum(counts)):
            best = max(range(3), key=lambda i: (remainders[i], -i))
            counts[best] += 1
            remainders[best] = -1.0
        perm = rng.permutation(n)
        bounds = (counts[0], counts[0] + counts[1])
        for pos, idx in enumerate(perm):
            name = SPLITS[0] if pos < bounds[0] else SPLITS[1] if pos < bounds[1] else SPLITS[2]
            assigned[recs[idx].path] = name
    new_records = [
        ManifestRecord(r.path, r.id, r.label, r.source, assigned[r.path])
        for r in manifest.records
    ]
    return DatasetManifest(new_records, manifest.root)


ARTIFACT_KINDS = ("spectral", "semantic", "both")


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of one synthetic corpus."""

    count_per_class: int
    image_size: int = 128
    artifact: str = "spectral"
    seed: int = 0

    def __post_init__(self):
        if self.count_per_class < 2:
            raise ArgumentError(
                f"count_per_class must be at least 2, got {self.count_per_class}"
            )
        if self.image_size < 2 * SENTINEL_SIZE:
            raise ArgumentError(
                f"image_size must be at least {2 * SENTINEL_SIZE}, got {self.image_size}"
            )
        if self.artifact not in ARTIFACT_KINDS:
            raise ArgumentError(
                f"artifact must be one of {ARTIFACT_KINDS}, got {self.artifact!r}"
            )


def synth_spec_from_json(path) -> SynthSpec:
    path = Path(path)
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ArgumentError(f"cannot read synth spec {path}: {exc}") from exc
    allowed = {"count_per_class", "image_size", "artifact", "seed"}
    if not isinstance(obj, dict) or not set(obj) <= allowed:
        raise ArgumentError(
            f"synth spec keys must be a subset of {sorted(allowed)}, got {obj}"
        )
    if "count_per_class" not in obj:
        raise ArgumentError("synth spec must set count_per_class")
    return SynthSpec(**obj)


def _smooth_field(rng: np.random.Generator, size: int) -> np.ndarray:
    """Bilinear blend of four random corner values, shared by all channels.

    A gray base keeps the channel difference of a clean image at pure
    sensor noise, so the chroma sentinel is the only smooth color
    structure a semantic fake carries.
    """
    corners = rng.uniform(GRADIENT_LOW, GRADIENT_HIGH, size=(2, 2))
    t = np.linspace(0.0, 1.0, size)
    top = corners[0, 0] * (1 - t) + corners[0, 1] * t
    bottom = corners[1, 0] * (1 - t) + corners[1, 1] * t
    plane = top[None, :] * (1 - t)[:, None] + bottom[None, :] * t[:, None]
    return np.repeat(plane[:, :, None], 3, axis=2)


def _to_u8(data: np.ndarray) -> np.ndarray:
    return np.clip(np.floor(data + 0.5), 0.0, 255.0).astype(np.uint8)


def _real_pixels(rng: np.random.Generator, size: int) -> np.ndarray:
    base = _smooth_field(rng, size)
    noise = rng.normal(0.0, NOISE_SIGMA, size=(size, size, 3))
    np.clip(noise, -_NOISE_LIMIT, _NOISE_LIMIT, out=noise)
    return _to_u8(base + noise)


def _downsample_upsample(pixels: np.ndarray) -> np.ndarray:
    from .imageio import resize_image

    size = pixels.shape[0]
    img = RgbImage(pixels)
    small = resize_image(img, size // 2, size // 2, "bilinear")
    return resize_image(small, size, size, "bilinear").pixels


_SENTINEL_CACHE = None


def sentinel_pattern() -> np.ndarray:
    """The fixed 16x16 integer plateau every semantic fake carries.

    The values are added to the red channel and subtracted from the
    green channel, so the per-pixel channel sum of a stamped image is
    unchanged.  The high-pass residual extractor pools channels before
    scaling, which makes the stamp exactly invisible to it; only an
    encoder that keeps channels apart can learn the cue.  The flat top
    maximizes the integrated chroma shift a global pooling stage sees,
    while the raised-sine skirts keep the stamp free of sharp edges
    that would leak into the frequency grades.
    """
    global _SENTINEL_CACHE
    if _SENTINEL_CACHE is None:
        s = SENTINEL_SIZE
        w = np.minimum(2.0 * np.sin(np.pi * (np.arange(s) + 0.5) / s) ** 2, 1.0)
        plateau = SENTINEL_PEAK * w[:, None] * w[None, :]
        pattern = np.floor(plateau + 0.5).astype(np.int16)
        pattern.setflags(write=False)
        _SENTINEL_CACHE = pattern
    return _SENTINEL_CACHE


def _stamp(pixels: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    # Base pixels stay within [45, 210] by construction, so +-45 on the
    # red/green pair cannot wrap the uint8 range.
    out = pixels.copy()
    s = SENTINEL_SIZE
    limit = pixels.shape[0] - s
    r = int(rng.integers(0, limit + 1))
    c = int(rng.integers(0, limit + 1))
    region = out[r : r + s, c : c + s].astype(np.int16)
    region[:, :, 0] += sentinel_pattern()
    region[:, :, 1] -= sentinel_pattern()
    out[r : r + s, c : c + s] = region.astype(np.uint8)
    return out


def _fake_pixels(rng: np.random.Generator, size: int, artifact: str) -> np.ndarray:
    px = _real_pixels(rng, size)
    if artifact in ("spectral", "both"):
        px = _downsample_upsample(px)
    if artifact in ("semantic", "both"):
        px = _stamp(px, rng)
    return px


def make_synthetic_dataset(spec: SynthSpec, out_dir) -> DatasetManifest:
    """Render the corpus to out_dir/{real,fake}/*.png plus manifest.jsonl.

    Every image draws from its own generator seeded by (spec.seed,
    class, index), so corpora are bitwise reproducible and insensitive
    to generation order.
    """
    out_dir = Path(out_dir)
    width = len(str(spec.count_per_class - 1))
    records = []
    for label_code, label in enumerate(LABELS):
        (out_dir / label).mkdir(parents=True, exist_ok=True)
        for i in range(spec.count_per_class):
            rng = np.random.default_rng([spec.seed, label_code, i])
            if label == "real":
                px = _real_pixels(rng, spec.image_size)
                source = "synthetic-real"
            else:
                px = _fake_pixels(rng, spec.image_size, spec.artifact)
                source = f"synthetic-{spec.artifact}"
            rel = f"{label}/{label}_{i:0{width}d}.png"
            save_image(RgbImage(px), out_dir / rel)
            records.append(
                ManifestRecord(path=rel, id=rel, label=label, source=source, split="train")
            )
    manifest = DatasetManifest(records, out_dir)
    manifest.save(out_dir / "manifest.jsonl")
    return manifest
