"""The detector: two patch-residual experts fused with a semantic embedding.

Scoring pipeline for one image:

1. Tile into patch_n x patch_n patches, grade each by weighted DCT band
   log-energy, keep the k_select highest- and lowest-graded patches.
2. Resize each kept patch to patch_resize, extract its noise residual,
   and embed it: encoder f1 handles the high-grade patches, f2 the
   low-grade ones. Each side averages its k_select embeddings into one
   vector (F_max, F_min).
3. Embed the whole image semantically (tiny conv encoder on a resized
   view, or a projected precomputed embedding), giving F_s.
4. Fuse: F_mean = (F_max + F_min) / 2, concatenate with F_s, and score
   with a linear -> GELU -> linear head producing one logit.

Ablation variants zero out branches: a disabled patch side drops out of
F_mean (one side alone is used as-is; both disabled gives zeros), and a
disabled semantic branch contributes zeros for F_s. Parameters for all
branches always exist, so checkpoints are shape-compatible across
variants sharing a config.

Gradients flow to encoder inputs only; grading, selection, resizing and
residual extraction are fixed preprocessing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import AideConfig
from .errors import ArgumentError
from .frequency import build_band_filter_bank, select_extreme_patches
from .imageio import RgbImage, patchify, resize_image
from .nn import GELU, AvgPool2d, Conv2d, GlobalAvgPool, Linear, ReLU, sigmoid
from .srm import SrmKernelSet, default_kernel_set, srm_residual

VARIANTS = (
    "full",
    "pfe_h_only",
    "pfe_l_only",
    "sfe_only",
    "pfe_only",
    "h_plus_sfe",
    "l_plus_sfe",
)

_INIT_STREAM = 0x1817


class ConvStack:
    """conv3x3(3->16)/relu/pool, conv3x3(16->32)/relu/pool, conv3x3(32->64)/relu."""

    def __init__(self, rng):
        self.conv1 = Conv2d(3, 16, 3, rng, pad=1)
        self.conv2 = Conv2d(16, 32, 3, rng, pad=1)
        self.conv3 = Conv2d(32, 64, 3, rng, pad=1)
        self._relu = ReLU()
        self._pool = AvgPool2d()

    def forward(self, x):
        y, c1 = self.conv1.forward(x)
        y, r1 = self._relu.forward(y)
        y, p1 = self._pool.forward(y)
        y, c2 = self.conv2.forward(y)
        y, r2 = self._relu.forward(y)
        y, p2 = self._pool.forward(y)
        y, c3 = self.conv3.forward(y)
        y, r3 = self._relu.forward(y)
        return y, (c1, r1, p1, c2, r2, p2, c3, r3)

    def backward(self, ctx, dy):
        c1, r1, p1, c2, r2, p2, c3, r3 = ctx
        dy = self._relu.backward(r3, dy)
        dy = self.conv3.backward(c3, dy)
        dy = self._pool.backward(p2, dy)
        dy = self._relu.backward(r2, dy)
        dy = self.conv2.backward(c2, dy)
        dy = self._pool.backward(p1, dy)
        dy = self._relu.backward(r1, dy)
        dy = self.conv1.backward(c1, dy)
        return dy

    def params(self, prefix):
        out = {}
        for name, layer in (("conv1", self.conv1), ("conv2", self.conv2), ("conv3", self.conv3)):
            for pname, p in layer.params().items():
                out[f"{prefix}.{name}.{pname}"] = p
        return out


class PatchEncoder:
    """ConvStack, global average pool, linear projection to the embedding."""

    def __init__(self, dim, rng):
        self.stack = ConvStack(rng)
        self.gap = GlobalAvgPool()
        self.proj = Linear(64, dim, rng)

    def encode(self, x):
        fmap, sctx = self.stack.forward(x)
        pooled, gctx = self.gap.forward(fmap)
        vec, pctx = self.proj.forward(pooled)
        return vec, (sctx, gctx, pctx)

    def backward(self, ctx, dvec):
        sctx, gctx, pctx = ctx
        dpooled = self.proj.backward(pctx, dvec)
        dfmap = self.gap.backward(gctx, dpooled)
        return self.stack.backward(sctx, dfmap)

    def params(self, prefix):
        out = self.stack.params(prefix)
        for pname, p in self.proj.params().items():
            out[f"{prefix}.proj.{pname}"] = p
        return out


class TinySemanticEncoder:
    """ConvStack on a resized whole-image view, projected per location,
    then averaged over space."""

    def __init__(self, ds, rng):
        self.stack = ConvStack(rng)
        self.g = Linear(64, ds, rng)

    def encode(self, x):
        fmap, sctx = self.stack.forward(x)
        c, h, w = fmap.shape
        locations = np.ascontiguousarray(fmap.reshape(c, h * w).T)
        z, gctx = self.g.forward(locations)
        vec = z.mean(axis=0)
        return vec, (sctx, (c, h, w), gctx)

    def backward(self, ctx, dvec):
        sctx, (c, h, w), gctx = ctx
        dz = np.broadcast_to(dvec / (h * w), (h * w, dvec.shape[0])).copy()
        dlocations = self.g.backward(gctx, dz)
        dfmap = np.ascontiguousarray(dlocations.T).reshape(c, h, w)
        return self.stack.backward(sctx, dfmap)

    def params(self, prefix):
        out = self.stack.params(prefix)
        for pname, p in self.g.params().items():
            out[f"{prefix}.g.{pname}"] = p
        return out


class TableProjection:
    """Linear map from a frozen precomputed embedding to the semantic width."""

    def __init__(self, table_dim, ds, rng):
        self.g = Linear(table_dim, ds, rng)

    def encode(self, vec):
        return self.g.forward(vec)

    def backward(self, ctx, dvec):
        return self.g.backward(ctx, dvec)

    def params(self, prefix):
        return {f"{prefix}.g.{pname}": p for pname, p in self.g.params().items()}


class FusionHead:
    """linear(d_in -> hidden), GELU, linear(hidden -> 1)."""

    def __init__(self, d_in, hidden, rng):
        self.lin1 = Linear(d_in, hidden, rng)
        self.act = GELU()
        self.lin2 = Linear(hidden, 1, rng)

    def forward(self, x):
        h, c1 = self.lin1.forward(x)
        a, ca = self.act.forward(h)
        z, c2 = self.lin2.forward(a)
        return float(z[0]), (c1, ca, c2)

    def backward(self, ctx, dlogit):
        c1, ca, c2 = ctx
        dz = np.array([float(dlogit)])
        da = self.lin2.backward(c2, dz)
        dh = self.act.backward(ca, da)
        return self.lin1.backward(c1, dh)

    def params(self, prefix):
        out = {}
        for name, layer in (("lin1", self.lin1), ("lin2", self.lin2)):
            for pname, p in layer.params().items():
                out[f"{prefix}.{name}.{pname}"] = p
        return out


@dataclass(frozen=True)
class SelectedPatchInfo:
    linear_index: int
    grid_row: int
    grid_col: int
    grade: float


@dataclass(frozen=True, eq=False)
class Diagnostics:
    """Per-image scoring internals for inspection and reports."""

    grades: tuple | None
    max_patches: tuple
    min_patches: tuple
    f_max: np.ndarray | None
    f_min: np.ndarray | None
    f_s: np.ndarray | None
    f_mean: np.ndarray | None


@dataclass(frozen=True, eq=False)
class ForwardResult:
    probability: float
    logit: float
    diagnostics: Diagnostics


class AideModel:
    """Detector parameters plus the full scoring pipeline.

    Construction draws every parameter tensor from one generator seeded
    by config.seed, in a fixed order (f1, f2, semantic branch, fusion),
    so two models built from equal configs are bitwise identical.
    """

    def __init__(self, config: AideConfig, variant: str = "full", table_dim: int | None = None):
        if variant not in VARIANTS:
            raise ArgumentError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
        self.config = config
        self.variant = variant
        self.uses_high = variant in ("full", "pfe_h_only", "pfe_only", "h_plus_sfe")
        self.uses_low = variant in ("full", "pfe_l_only", "pfe_only", "l_plus_sfe")
        self.uses_semantic = variant in ("full", "sfe_only", "h_plus_sfe", "l_plus_sfe")

        self.bank = build_band_filter_bank(config.patch_n, config.k_bands)
        if config.srm_kernels is None:
            self.kernel_set = default_kernel_set(config.clamp_t)
        else:
            self.kernel_set = SrmKernelSet(config.srm_kernels, config.clamp_t)

        if config.semantic_source == "embedded_table":
            if table_dim is None:
                raise ArgumentError(
                    "embedded_table mode needs table_dim (the stored embedding width)"
                )
            self.table_dim = int(table_dim)
        else:
            self.table_dim = None

        rng = np.random.default_rng([config.seed, _INIT_STREAM])
        self.f1 = PatchEncoder(config.encoder_dim, rng)
        self.f2 = PatchEncoder(config.encoder_dim, rng)
        if config.semantic_source == "tiny_encoder":
            self.semantic = TinySemanticEncoder(config.semantic_dim, rng)
        else:
            self.semantic = TableProjection(self.table_dim, config.semantic_dim, rng)
        self.fusion = FusionHead(config.encoder_dim + config.semantic_dim, config.fusion_hidden, rng)

        self._params = {}
        self._params.update(self.f1.params("f1"))
        self._params.update(self.f2.params("f2"))
        self._params.update(self.semantic.params("semantic"))
        self._params.update(self.fusion.params("fusion"))

    def named_params(self) -> dict:
        return self._params

    # -- preprocessing ----------------------------------------------------

    def _residual_input(self, patch) -> np.ndarray:
        img = RgbImage(patch.pixels)
        size = self.config.patch_resize
        if img.width != size or img.height != size:
            img = resize_image(img, size, size, "bilinear")
        res = srm_residual(img, self.kernel_set)
        return np.ascontiguousarray(res.transpose(2, 0, 1))

    def _semantic_input(self, image: RgbImage) -> np.ndarray:
        size = self.config.semantic_input_size
        if image.width != size or image.height != size:
            image = resize_image(image, size, size, "bilinear")
        data = image.pixels.astype(np.float64) / 255.0
        return np.ascontiguousarray(data.transpose(2, 0, 1))

    def select_patches(self, image: RgbImage):
        patches = patchify(image, self.config.patch_n)
        return select_extreme_patches(patches, self.bank, self.config.k_select)

    # -- forward / backward ------------------------------------------------

    def forward(self, image: RgbImage, image_id: str | None = None, table=None) -> ForwardResult:
        result, _ = self.forward_train(image, image_id, table)
        return result

    def forward_train(self, image: RgbImage, image_id: str | None = None, table=None):
        """Score one image, returning (ForwardResult, ctx) for backward()."""
        cfg = self.config
        k = cfg.k_select
        grades = None
        max_info = ()
        min_info = ()
        f_max = f_min = None
        high_ctxs = []
        low_ctxs = []

        if self.uses_high or self.uses_low:
            selection = self.select_patches(image)
            grades = selection.grades
            max_info = tuple(
                SelectedPatchInfo(p.linear_index, p.grid_row, p.grid_col, grades[p.linear_index])
                for p in selection.max_patches
            )
            min_info = tuple(
                SelectedPatchInfo(p.linear_index, p.grid_row, p.grid_col, grades[p.linear_index])
                for p in selection.min_patches
            )
            if self.uses_high:
                vecs = []
                for patch in selection.max_patches:
                    vec, ctx = self.f1.encode(self._residual_input(patch))
                    vecs.append(vec)
                    high_ctxs.append(ctx)
                f_max = np.mean(vecs, axis=0)
            if self.uses_low:
                vecs = []
                for patch in selection.min_patches:
                    vec, ctx = self.f2.encode(self._residual_input(patch))
                    vecs.append(vec)
                    low_ctxs.append(ctx)
                f_min = np.mean(vecs, axis=0)

        sem_ctx = None
        if self.uses_semantic:
            if cfg.semantic_source == "tiny_encoder":
                f_s, sem_ctx = self.semantic.encode(self._semantic_input(image))
            else:
                if table is None:
                    raise ArgumentError("embedded_table mode needs an embedding table")
                if image_id is None:
                    raise ArgumentError("embedded_table mode needs the image id")
                stored = table.lookup(image_id)
                if stored.shape[0] != self.table_dim:
                    raise ArgumentError(
                        f"table dim {stored.shape[0]} does not match model table dim "
                        f"{self.table_dim}"
                    )
                f_s, sem_ctx = self.semantic.encode(stored)
        else:
            f_s = np.zeros(cfg.semantic_dim)

        if self.uses_high and self.uses_low:
            f_mean = 0.5 * (f_max + f_min)
        elif self.uses_high:
            f_mean = f_max
        elif self.uses_low:
            f_mean = f_min
        else:
            f_mean = np.zeros(cfg.encoder_dim)

        fused_in = np.concatenate([f_mean, f_s])
        logit, fusion_ctx = self.fusion.forward(fused_in)
        diag = Diagnostics(
            grades=grades,
            max_patches=max_info,
            min_patches=min_info,
            f_max=f_max,
            f_min=f_min,
            f_s=f_s if self.uses_semantic else None,
            f_mean=f_mean,
        )
        result = ForwardResult(probability=sigmoid(logit), logit=logit, diagnostics=diag)
        ctx = (high_ctxs, low_ctxs, sem_ctx, fusion_ctx)
        return result, ctx

    def backward(self, ctx, dlogit: float) -> None:
        """Accumulate parameter gradients for one scored image."""
        high_ctxs, low_ctxs, sem_ctx, fusion_ctx = ctx
        cfg = self.config
        dfused = self.fusion.backward(fusion_ctx, dlogit)
        df_mean = dfused[: cfg.encoder_dim]
        df_s = dfused[cfg.encoder_dim :]

        if self.uses_semantic:
            self.semantic.backward(sem_ctx, df_s)

        if self.uses_high and self.uses_low:
            df_max = 0.5 * df_mean
            df_min = 0.5 * df_mean
        elif self.uses_high:
            df_max, df_min = df_mean, None
        elif self.uses_low:
            df_max, df_min = None, df_mean
        else:
            df_max = df_min = None

        if self.uses_high and df_max is not None:
            share = df_max / len(high_ctxs)
            for patch_ctx in high_ctxs:
                self.f1.backward(patch_ctx, share)
        if self.uses_low and df_min is not None:
            share = df_min / len(low_ctxs)
            for patch_ctx in low_ctxs:
                self.f2.backward(patch_ctx, share)

    def fuse(self, f_max, f_min, f_s) -> float:
        """Score from branch embeddings directly (diagnostic helper)."""
        f_mean = 0.5 * (np.asarray(f_max, dtype=np.float64) + np.asarray(f_min, dtype=np.float64))
        fused_in = np.concatenate([f_mean, np.asarray(f_s, dtype=np.float64)])
        logit, _ = self.fusion.forward(fused_in)
        return logit

    def zero_grad(self):
        for p in self._params.values():
            p.zero_grad()
