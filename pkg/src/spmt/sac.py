"""Semantic-aware patch correspondence kernel.

Feature maps are cut into non-overlapping k x k patches; every source patch
is rebuilt as a weighted sum of reference patches, with weights from a
softmax over patch NCC, gated so that mass only lands on reference patches
of the same facial-semantic component. Four weighting modes cover the main
path and the ablation comparisons:

* ``semantic_soft``   - gate out cross-semantic candidates, softmax the rest
                        (rows sum to 1)
* ``semantic_literal``- softmax over all candidates, then multiply by the
                        semantic correlation (rows may sum to < 1)
* ``plain_soft``      - ungated softmax
* ``nearest``         - one-hot argmax of NCC
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .tensor import FeatureMap, FeaturePyramid, MaskPyramid, OneHotMask

MODES = ("semantic_soft", "semantic_literal", "plain_soft", "nearest")

# fixed chunk of source-patch rows; independent of thread count so results
# are bit-identical at any parallelism level
ROW_CHUNK = 64


def thread_count(threads: int | None = None) -> int:
    if threads is not None:
        return max(1, threads)
    env = os.environ.get("SPMT_THREADS", "")
    try:
        return max(1, int(env))
    except ValueError:
        return 1


@dataclass(frozen=True)
class SacConfig:
    patch_sizes: tuple[int, int, int, int] = (8, 4, 2, 1)
    beta: float = 100.0
    alphas: tuple[float, float, float, float] = (1.0, 0.4, 0.2, 0.1)
    epsilon: float = 1e-8
    mode: str = "semantic_soft"
    semantic_gate_threshold: float = 0.5

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}, expected one of {MODES}")
        if any(k < 1 for k in self.patch_sizes):
            raise ValueError("patch sizes must be positive")
        if any(not 0.0 <= a <= 1.0 for a in self.alphas):
            raise ValueError("alphas must lie in [0, 1]")

    def correspondence_digest(self) -> str:
        """Key for caching weights: everything that affects them (not alphas)."""
        return (
            f"k={self.patch_sizes}|b={self.beta!r}|e={self.epsilon!r}"
            f"|m={self.mode}|t={self.semantic_gate_threshold!r}"
        )


@dataclass(frozen=True)
class PatchGrid:
    """Row-major grid of flattened non-overlapping patches."""

    channels: int
    height: int
    width: int
    patch_size: int
    grid_h: int
    grid_w: int
    patches: np.ndarray  # (grid_h * grid_w, channels * k * k) float32

    @property
    def n_patches(self) -> int:
        return self.grid_h * self.grid_w

    @property
    def stride(self) -> int:
        return self.patch_size


@dataclass(frozen=True)
class CorrespondenceField:
    """Per-source-patch weight rows over reference patches."""

    weights: np.ndarray  # (n_source, n_reference) float64, nonnegative
    mode: str
    unmatched: frozenset[int] = field(default_factory=frozenset)

    @property
    def n_source(self) -> int:
        return self.weights.shape[0]

    @property
    def n_reference(self) -> int:
        return self.weights.shape[1]


def extract_patches(fmap: FeatureMap | np.ndarray, k: int) -> PatchGrid:
    data = fmap.data if isinstance(fmap, FeatureMap) else np.asarray(fmap, np.float32)
    c, h, w = data.shape
    if k > h or k > w:
        raise ValueError(f"patch size {k} exceeds map extent {h}x{w}")
    gh, gw = h // k, w // k
    cropped = data[:, : gh * k, : gw * k]
    patches = (
        cropped.reshape(c, gh, k, gw, k)
        .transpose(1, 3, 0, 2, 4)
        .reshape(gh * gw, c * k * k)
    )
    return PatchGrid(c, h, w, k, gh, gw, np.ascontiguousarray(patches))


def fold_patches(patches: np.ndarray, grid: PatchGrid) -> FeatureMap:
    """Write patch rows back to their grid positions."""
    c, k, gh, gw = grid.channels, grid.patch_size, grid.grid_h, grid.grid_w
    data = (
        patches.reshape(gh, gw, c, k, k)
        .transpose(2, 0, 3, 1, 4)
        .reshape(c, gh * k, gw * k)
    )
    return FeatureMap(np.ascontiguousarray(data, dtype=np.float32))


def extract_mask_patches(mask: OneHotMask, k: int) -> PatchGrid:
    return extract_patches(mask.data, k)


def _safe_norms(patches: np.ndarray, eps: float) -> np.ndarray:
    return np.maximum(np.linalg.norm(patches.astype(np.float64), axis=1), eps)


def ncc_matrix(px: PatchGrid, py: PatchGrid, epsilon: float = 1e-8) -> np.ndarray:
    """Cosine similarity between every source/reference patch pair."""
    if px.channels != py.channels or px.patch_size != py.patch_size:
        raise ValueError(
            f"patch grids disagree: {px.channels}ch/k={px.patch_size} vs "
            f"{py.channels}ch/k={py.patch_size}"
        )
    nx = _safe_norms(px.patches, epsilon)
    ny = _safe_norms(py.patches, epsilon)
    dots = px.patches.astype(np.float64) @ py.patches.astype(np.float64).T
    return dots / (nx[:, None] * ny[None, :])


def sem_ncc_matrix(pmx: PatchGrid, pmy: PatchGrid, epsilon: float = 1e-8) -> np.ndarray:
    """NCC on one-hot mask patches: 1 for same-semantic pixels, 0 otherwise."""
    if pmx.patch_size != pmy.patch_size or pmx.channels != pmy.channels:
        raise ValueError("mask patch grids disagree with each other")
    return ncc_matrix(pmx, pmy, epsilon)


def _weight_rows(
    ncc: np.ndarray, semncc: np.ndarray | None, cfg: SacConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Weight rows plus a matched-flag per row; row-local, safe to chunk."""
    ncc = ncc.astype(np.float64, copy=False)
    n = ncc.shape[0]
    mode = cfg.mode

    if mode == "nearest":
        idx = np.argmax(ncc, axis=1)  # ties -> smallest j
        weights = np.zeros_like(ncc)
        weights[np.arange(n), idx] = 1.0
        return weights, np.ones(n, dtype=bool)

    logits = cfg.beta * ncc
    if mode == "semantic_soft":
        if semncc is None:
            raise ValueError("semantic_soft mode needs a semantic NCC matrix")
        admissible = semncc >= cfg.semantic_gate_threshold
        logits = np.where(admissible, logits, -np.inf)

    rowmax = logits.max(axis=1)
    matched = np.isfinite(rowmax)
    shifted = logits - np.where(matched, rowmax, 0.0)[:, None]
    expw = np.exp(shifted)
    expw[~matched] = 0.0
    sums = expw.sum(axis=1)
    weights = expw / np.where(sums > 0.0, sums, 1.0)[:, None]

    if mode == "semantic_literal":
        if semncc is None:
            raise ValueError("semantic_literal mode needs a semantic NCC matrix")
        weights = weights * semncc
        matched = weights.sum(axis=1) > 0.0
        weights[~matched] = 0.0
    return weights, matched


def correspond(
    ncc: np.ndarray, semncc: np.ndarray | None, cfg: SacConfig
) -> CorrespondenceField:
    if semncc is not None and semncc.shape != ncc.shape:
        raise ValueError(f"shape mismatch: ncc {ncc.shape} vs semncc {semncc.shape}")
    weights, matched = _weight_rows(ncc, semncc, cfg)
    unmatched = frozenset(int(i) for i in np.flatnonzero(~matched))
    return CorrespondenceField(weights, cfg.mode, unmatched)


def reconstruct(
    field: CorrespondenceField, py: PatchGrid, px: PatchGrid
) -> FeatureMap:
    """Blend reference patches per weight row; unmatched rows fall back to source."""
    if field.n_source != px.n_patches or field.n_reference != py.n_patches:
        raise ValueError(
            f"field is {field.n_source}x{field.n_reference}, grids hold "
            f"{px.n_patches} source / {py.n_patches} reference patches"
        )
    if field.mode == "nearest":
        idx = np.argmax(field.weights, axis=1)
        out = py.patches[idx].copy()  # exact copy, no arithmetic
    else:
        out = (field.weights @ py.patches.astype(np.float64)).astype(np.float32)
    if field.unmatched:
        fallback = sorted(field.unmatched)
        out[fallback] = px.patches[fallback]
    return fold_patches(out, px)


def apply_transfer_mask(
    fp: FeatureMap, fx: FeatureMap, mt: np.ndarray
) -> FeatureMap:
    """Keep fp where the binary mask is 1, fx elsewhere (exact selection)."""
    if fp.data.shape != fx.data.shape:
        raise ValueError(f"shape mismatch: {fp.data.shape} vs {fx.data.shape}")
    if mt.shape != fp.data.shape[1:]:
        raise ValueError(f"mask {mt.shape} does not match maps {fp.data.shape[1:]}")
    return FeatureMap(np.where(mt[None, :, :] >= 0.5, fp.data, fx.data))


def alpha_blend(fp: FeatureMap, fx: FeatureMap, alpha: float) -> FeatureMap:
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    if fp.data.shape != fx.data.shape:
        raise ValueError(f"shape mismatch: {fp.data.shape} vs {fx.data.shape}")
    if alpha == 1.0:
        return fp
    if alpha == 0.0:
        return fx
    # fx + alpha * (fp - fx) so that fp == fx blends to fx bit-exactly
    return FeatureMap(
        (fx.data + np.float32(alpha) * (fp.data - fx.data)).astype(np.float32)
    )


def _level_pass(
    fx: FeatureMap,
    fy: FeatureMap,
    mx: OneHotMask,
    my: OneHotMask,
    k: int,
    cfg: SacConfig,
    threads: int,
) -> tuple[FeatureMap, CorrespondenceField]:
    """One pyramid level: patches -> NCC -> gate -> weights -> reconstruction.

    Work is split over fixed-size row chunks so the output is bit-identical
    for any thread count.
    """
    px = extract_patches(fx, k)
    py = extract_patches(fy, k)
    needs_sem = cfg.mode in ("semantic_soft", "semantic_literal")
    pmx = extract_mask_patches(mx, k) if needs_sem else None
    pmy = extract_mask_patches(my, k) if needs_sem else None
    if pmx is not None and (pmx.grid_h, pmx.grid_w) != (px.grid_h, px.grid_w):
        raise ValueError(
            f"mask grid {pmx.grid_h}x{pmx.grid_w} does not match feature grid "
            f"{px.grid_h}x{px.grid_w} at k={k}"
        )

    eps = cfg.epsilon
    xf = px.patches.astype(np.float64)
    yf = py.patches.astype(np.float64)
    nx = _safe_norms(px.patches, eps)
    ny = _safe_norms(py.patches, eps)
    if needs_sem:
        mxf = pmx.patches.astype(np.float64)
        myf = pmy.patches.astype(np.float64)
        nmx = _safe_norms(pmx.patches, eps)
        nmy = _safe_norms(pmy.patches, eps)

    n = px.n_patches
    weights_full = np.empty((n, py.n_patches), dtype=np.float64)
    matched_full = np.empty(n, dtype=bool)
    out_patches = np.empty_like(px.patches)

    def run_chunk(start: int) -> None:
        stop = min(start + ROW_CHUNK, n)
        ncc_c = (xf[start:stop] @ yf.T) / (nx[start:stop, None] * ny[None, :])
        sem_c = None
        if needs_sem:
            sem_c = (mxf[start:stop] @ myf.T) / (nmx[start:stop, None] * nmy[None, :])
        w_c, m_c = _weight_rows(ncc_c, sem_c, cfg)
        weights_full[start:stop] = w_c
        matched_full[start:stop] = m_c
        if cfg.mode == "nearest":
            out_patches[start:stop] = py.patches[np.argmax(w_c, axis=1)]
        else:
            out_patches[start:stop] = (w_c @ yf).astype(np.float32)
        fallback = np.flatnonzero(~m_c)
        if fallback.size:
            out_patches[start + fallback] = px.patches[start + fallback]

    starts = range(0, n, ROW_CHUNK)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run_chunk, starts))
    else:
        for s in starts:
            run_chunk(s)

    unmatched = frozenset(int(i) for i in np.flatnonzero(~matched_full))
    field = CorrespondenceField(weights_full, cfg.mode, unmatched)
    return fold_patches(out_patches, px), field


def reconstruct_pyramid(
    src: FeaturePyramid,
    ref: FeaturePyramid,
    src_masks: MaskPyramid,
    ref_masks: MaskPyramid,
    cfg: SacConfig | None = None,
    threads: int | None = None,
) -> tuple[list[FeatureMap], list[CorrespondenceField]]:
    """Raw per-level patch reconstructions plus the correspondence fields.

    This is the expensive, cacheable half; transfer-mask substitution and
    content blending are cheap elementwise follow-ups.
    """
    cfg = cfg or SacConfig()
    nthreads = thread_count(threads)
    recons: list[FeatureMap] = []
    fields: list[CorrespondenceField] = []
    for lvl in range(4):
        recon, fld = _level_pass(
            src.levels[lvl],
            ref.levels[lvl],
            src_masks.levels[lvl],
            ref_masks.levels[lvl],
            cfg.patch_sizes[lvl],
            cfg,
            nthreads,
        )
        recons.append(recon)
        fields.append(fld)
    return recons, fields


def blend_pyramid(
    recons: list[FeatureMap],
    src: FeaturePyramid,
    mt_levels: tuple[np.ndarray, ...] | None,
    cfg: SacConfig,
) -> FeaturePyramid:
    """Transfer-mask substitution then per-scale content blending."""
    out = []
    for lvl in range(4):
        fp = recons[lvl]
        fx = src.levels[lvl]
        if mt_levels is not None:
            fp = apply_transfer_mask(fp, fx, mt_levels[lvl])
        out.append(alpha_blend(fp, fx, cfg.alphas[lvl]))
    return FeaturePyramid(tuple(out), carries_rgb=src.carries_rgb)


def sac_full(
    src: FeaturePyramid,
    ref: FeaturePyramid,
    src_masks: MaskPyramid,
    ref_masks: MaskPyramid,
    mt_levels: tuple[np.ndarray, ...] | None = None,
    cfg: SacConfig | None = None,
    threads: int | None = None,
) -> tuple[FeaturePyramid, list[CorrespondenceField]]:
    """Full per-level pipeline: correspondence, substitution, blending."""
    cfg = cfg or SacConfig()
    recons, fields = reconstruct_pyramid(src, ref, src_masks, ref_masks, cfg, threads)
    return blend_pyramid(recons, src, mt_levels, cfg), fields
