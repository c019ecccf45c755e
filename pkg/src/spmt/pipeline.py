"""End-to-end transfer orchestration shared by the CLI and the HTTP service.

Both makeup transfer and makeup removal run through :func:`run_transfer`;
removal only swaps which face is source and which is reference before
calling it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .control import (
    RecipeError,
    TransferRecipe,
    assign_parts,
    fuse_references,
    part_region,
    shade_interpolate,
)
from .encoder import EncoderConfig, encode
from .metrics import MetricReport, evaluate
from .sac import SacConfig, blend_pyramid, reconstruct_pyramid
from .synthesis import RenderConfig, histogram_match_region, render
from .tensor import (
    FeatureMap,
    FeaturePyramid,
    LabelMask,
    MaskPyramid,
    binary_mask_pyramid,
    load_image,
    load_label_mask,
    mask_pyramid,
    one_hot,
)
from .control import build_transfer_mask


@dataclass(frozen=True)
class FaceAssets:
    """One face: image, parse mask, and their derived pyramids."""

    image: FeatureMap
    mask: LabelMask
    masks: MaskPyramid
    pyramid: FeaturePyramid
    encoder_cfg: EncoderConfig | None = None


def load_assets(
    image_path, mask_path, enc_cfg: EncoderConfig | None = None
) -> FaceAssets:
    image = load_image(image_path)
    mask = load_label_mask(mask_path)
    return make_assets(image, mask, enc_cfg)


def make_assets(
    image: FeatureMap, mask: LabelMask, enc_cfg: EncoderConfig | None = None
) -> FaceAssets:
    return FaceAssets(
        image=image,
        mask=mask,
        masks=mask_pyramid(one_hot(mask)),
        pyramid=encode(image, enc_cfg),
        encoder_cfg=enc_cfg,
    )


def compute_reconstructions(
    source: FaceAssets,
    ref: FaceAssets,
    sac_cfg: SacConfig,
    threads: int | None = None,
) -> list[FeatureMap]:
    """The expensive correspondence + patch reconstruction for one reference.

    The result depends only on (source, reference, correspondence config),
    so services cache it keyed by the config digest.
    """
    recons, _fields = reconstruct_pyramid(
        source.pyramid, ref.pyramid, source.masks, ref.masks, sac_cfg, threads
    )
    return recons


def run_transfer(
    source: FaceAssets,
    refs: list[FaceAssets],
    recipe: TransferRecipe,
    sac_cfg: SacConfig | None = None,
    render_cfg: RenderConfig | None = None,
    threads: int | None = None,
    cached_recons: list[list[FeatureMap]] | None = None,
) -> tuple[FeatureMap, MetricReport]:
    """Full pipeline from assets to output image and metric report."""
    sac_cfg = sac_cfg or SacConfig()
    render_cfg = render_cfg or RenderConfig()
    if not refs:
        raise RecipeError("at least one reference is required")
    if len(recipe.ref_weights) != len(refs):
        raise RecipeError(
            f"{len(refs)} references but {len(recipe.ref_weights)} weights"
        )

    if recipe.part_assignment is not None:
        active_parts = tuple(recipe.part_assignment.keys())
    else:
        active_parts = recipe.transfer_parts
    mt_full = build_transfer_mask(source.mask, active_parts)
    mt_levels = binary_mask_pyramid(mt_full)

    if cached_recons is None:
        cached_recons = [
            compute_reconstructions(source, r, sac_cfg, threads) for r in refs
        ]
    fxhats = [
        blend_pyramid(rec, source.pyramid, mt_levels, sac_cfg)
        for rec in cached_recons
    ]

    if recipe.part_assignment is not None:
        part_masks = {
            p: binary_mask_pyramid(part_region(source.mask, p).astype(np.float32))
            for p in active_parts
        }
        combined = assign_parts(
            {p: fxhats[r] for p, r in recipe.part_assignment.items()},
            source.pyramid,
            part_masks,
            mt_levels,
        )
    else:
        combined = fuse_references(fxhats, list(recipe.ref_weights))

    shaded = shade_interpolate(combined, source.pyramid, recipe.shade)

    # shade 0 means "no makeup": the output must be the untouched source, so
    # seam feathering and histogram post-matching are skipped
    if recipe.shade == 0.0:
        out = render(shaded)
    else:
        out = render(
            shaded, render_cfg, mt=mt_full, patch_size=sac_cfg.patch_sizes[0]
        )
        if render_cfg.hm_postprocess:
            out = _hm_postprocess(out, source, refs, recipe, active_parts)

    # imported feature pyramids are not comparable to built-in encodings of
    # the output image, so the perceptual terms only apply to built-in runs
    builtin = source.pyramid.carries_rgb
    report = evaluate(
        out, source.image, refs[0].image,
        source.mask, refs[0].mask, mt_full,
        fxhat=shaded if builtin else None,
        encoder_cfg=source.encoder_cfg,
        ref_pyramid=refs[0].pyramid if refs[0].pyramid.carries_rgb else None,
    )
    return out, report


def _hm_postprocess(
    out: FeatureMap,
    source: FaceAssets,
    refs: list[FaceAssets],
    recipe: TransferRecipe,
    active_parts,
) -> FeatureMap:
    """Match each transferred region's color histogram to its reference."""
    for part in active_parts:
        if recipe.part_assignment is not None:
            ref = refs[recipe.part_assignment[part]]
        else:
            ref = refs[0]
        src_region = part_region(source.mask, part)
        ref_region = part_region(ref.mask, part)
        if not src_region.any() or not ref_region.any():
            continue
        out = histogram_match_region(out, ref.image, src_region, ref_region, part)
    return out


def run_removal(
    makeup: FaceAssets,
    nonmakeup: FaceAssets,
    recipe: TransferRecipe,
    sac_cfg: SacConfig | None = None,
    render_cfg: RenderConfig | None = None,
    threads: int | None = None,
    cached_recons: list[list[FeatureMap]] | None = None,
) -> tuple[FeatureMap, MetricReport]:
    """Makeup removal: same pipeline, the clean face acting as reference."""
    return run_transfer(
        makeup, [nonmakeup], recipe, sac_cfg, render_cfg, threads, cached_recons
    )
