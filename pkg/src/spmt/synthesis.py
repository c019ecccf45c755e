"""Image synthesis without a trained decoder.

The built-in encoder keeps raw RGB in level-1 channels 0-2, so rendering is
a direct pixel read-out plus optional seam feathering across the patch
grid. Region-wise histogram matching doubles as a classical baseline and as
the reference signal for the makeup metric.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter

from .control import PARTS, build_transfer_mask, part_region
from .tensor import FeatureMap, FeaturePyramid, LabelMask

HIST_BINS = 256


class UnsupportedPyramidError(ValueError):
    """Raised when a pyramid lacks raw RGB at level 1 and cannot be rendered."""


class EmptyRegionError(ValueError):
    """Raised when a histogram-matching region contains no pixels."""


@dataclass(frozen=True)
class RenderConfig:
    hm_postprocess: bool = True
    seam_feather_radius: int = 3
    coarse_guidance: bool = True

    def __post_init__(self):
        if self.seam_feather_radius < 0:
            raise ValueError("feather radius must be >= 0")


def _seam_mask(h: int, w: int, k: int) -> np.ndarray:
    """Pixels adjacent to the non-overlapping k x k patch grid lines."""
    rows = np.zeros(h, dtype=bool)
    cols = np.zeros(w, dtype=bool)
    rows[k - 1 :: k] = True
    rows[k::k] = True
    cols[k - 1 :: k] = True
    cols[k::k] = True
    return rows[:, None] | cols[None, :]


def render(
    pyr: FeaturePyramid,
    cfg: RenderConfig | None = None,
    mt: np.ndarray | None = None,
    patch_size: int = 8,
) -> FeatureMap:
    """Read level-1 RGB, clamp, and feather patch seams inside the transfer mask."""
    cfg = cfg or RenderConfig()
    if not pyr.carries_rgb or pyr.levels[0].channels < 3:
        raise UnsupportedPyramidError(
            "pyramid does not carry raw RGB at level 1; only built-in encoder "
            "pyramids can be rendered"
        )
    img = np.clip(pyr.levels[0].data[:3], -1.0, 1.0).astype(np.float32)
    if mt is not None and cfg.seam_feather_radius > 1:
        seams = _seam_mask(img.shape[1], img.shape[2], patch_size) & (mt >= 0.5)
        if np.any(seams):
            size = cfg.seam_feather_radius | 1  # odd box width
            blurred = np.stack(
                [uniform_filter(img[c], size=size, mode="nearest") for c in range(3)]
            )
            img = np.where(seams[None, :, :], blurred, img)
    return FeatureMap(img)


def _quantize(channel: np.ndarray) -> np.ndarray:
    """Map [-1, 1] floats onto the 256 8-bit bins."""
    return np.clip(
        np.round((channel + 1.0) / 2.0 * 255.0), 0, 255
    ).astype(np.int64)


def _dequantize(bins: np.ndarray) -> np.ndarray:
    return (bins.astype(np.float32) / 255.0 * 2.0 - 1.0).astype(np.float32)


def _match_channel(src_vals: np.ndarray, ref_vals: np.ndarray) -> np.ndarray:
    """Monotone lower-CDF inversion on 256-bin histograms, per channel."""
    src_hist = np.bincount(src_vals, minlength=HIST_BINS)
    ref_hist = np.bincount(ref_vals, minlength=HIST_BINS)
    src_cdf = np.cumsum(src_hist) / src_vals.size
    ref_cdf = np.cumsum(ref_hist) / ref_vals.size
    # smallest ref bin whose CDF reaches the source CDF
    mapping = np.searchsorted(ref_cdf, src_cdf, side="left")
    mapping = np.clip(mapping, 0, HIST_BINS - 1)
    return mapping[src_vals]


def histogram_match_region(
    src: FeatureMap,
    ref: FeatureMap,
    src_region: np.ndarray,
    ref_region: np.ndarray,
    region_name: str = "region",
) -> FeatureMap:
    """Remap src pixels inside src_region onto ref_region's per-channel CDF."""
    src_sel = src_region >= 0.5
    ref_sel = ref_region >= 0.5
    if not np.any(src_sel):
        raise EmptyRegionError(f"source {region_name} region is empty")
    if not np.any(ref_sel):
        raise EmptyRegionError(f"reference {region_name} region is empty")
    out = src.data.copy()
    for c in range(src.channels):
        src_vals = _quantize(src.data[c][src_sel])
        ref_vals = _quantize(ref.data[c][ref_sel])
        out[c][src_sel] = _dequantize(_match_channel(src_vals, ref_vals))
    return FeatureMap(out)


def hm_composite(
    src: FeatureMap,
    ref: FeatureMap,
    src_mask: LabelMask,
    ref_mask: LabelMask,
    parts=PARTS,
) -> FeatureMap:
    """Region-wise histogram matching over lips, eye shadow, and skin,
    composited over the source. Missing regions are skipped, not fatal."""
    out = src
    for part in parts:
        src_region = part_region(src_mask, part)
        ref_region = part_region(ref_mask, part)
        if not src_region.any() or not ref_region.any():
            import warnings

            warnings.warn(f"histogram matching: {part} region empty, skipped")
            continue
        out = histogram_match_region(out, ref, src_region, ref_region, part)
    return out


def transfer_mask_for(mask: LabelMask, parts=PARTS) -> np.ndarray:
    return build_transfer_mask(mask, parts)
