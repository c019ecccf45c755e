"""Output evaluation: the training objectives re-purposed as distances
(minus the adversarial term), plus SSIM for identity preservation.

All norms are element-count normalized (RMS for L2, mean for L1) so values
do not scale with resolution.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy.ndimage import uniform_filter

from .encoder import EncoderConfig, encode_builtin
from .synthesis import hm_composite
from .tensor import FeatureMap, FeaturePyramid, LabelMask

LAMBDA_MAKEUP = 1.0
LAMBDA_COS = 5.0
LAMBDA_STY = 10.0
LAMBDA_CON = 100.0
LAMBDA_ADV = 1.0  # documented for completeness; no discriminator here

SSIM_WINDOW = 8
LUMA_WEIGHTS = (0.299, 0.587, 0.114)  # ITU-R BT.601


@dataclass(frozen=True)
class MetricReport:
    content: float
    cosmetic: float
    style: float
    makeup: float
    total: float
    ssim: float

    def to_json(self) -> str:
        d = asdict(self)
        d["weights"] = {
            "makeup": LAMBDA_MAKEUP,
            "cos": LAMBDA_COS,
            "sty": LAMBDA_STY,
            "con": LAMBDA_CON,
        }
        return json.dumps(d, sort_keys=True)


def _rms(arr: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.square(arr.astype(np.float64)))))


def content_distance(out: FeatureMap, src: FeatureMap, mt: np.ndarray) -> float:
    """RMS of the difference outside the transfer mask."""
    if out.data.shape != src.data.shape:
        raise ValueError(f"shape mismatch: {out.data.shape} vs {src.data.shape}")
    diff = (out.data - src.data) * (1.0 - mt)[None, :, :]
    return _rms(diff)


def cosmetic_perceptual_distance(
    out: FeatureMap, fxhat: FeaturePyramid, encoder_cfg: EncoderConfig | None = None
) -> float:
    """Per-level RMS between the output's pyramid and the reconstruction."""
    pyr = encode_builtin(out, encoder_cfg)
    total = 0.0
    for l in range(4):
        a, b = pyr.levels[l], fxhat.levels[l]
        if a.data.shape != b.data.shape:
            raise ValueError(
                f"level {l + 1} schedule mismatch: {a.data.shape} vs {b.data.shape}"
            )
        total += _rms(a.data - b.data)
    return total


def _style_from_pyramids(pa: FeaturePyramid, pb: FeaturePyramid) -> float:
    total = 0.0
    for l in range(4):
        a = pa.levels[l].data.astype(np.float64)
        b = pb.levels[l].data.astype(np.float64)
        mu_a, mu_b = a.mean(axis=(1, 2)), b.mean(axis=(1, 2))
        sd_a, sd_b = a.std(axis=(1, 2)), b.std(axis=(1, 2))
        total += _rms(mu_a - mu_b) + _rms(sd_a - sd_b)
    return total


def style_distance(
    out: FeatureMap, ref: FeatureMap, encoder_cfg: EncoderConfig | None = None
) -> float:
    """Per-level distance between channel-wise mean/std statistics."""
    return _style_from_pyramids(
        encode_builtin(out, encoder_cfg), encode_builtin(ref, encoder_cfg)
    )


def makeup_distance(
    out: FeatureMap,
    src: FeatureMap,
    ref: FeatureMap,
    src_mask: LabelMask,
    ref_mask: LabelMask,
) -> float:
    """Mean absolute distance to the histogram-matched pseudo target."""
    target = hm_composite(src, ref, src_mask, ref_mask)
    return float(np.mean(np.abs(out.data.astype(np.float64) - target.data)))


def _luma(img: FeatureMap) -> np.ndarray:
    r, g, b = img.data[0], img.data[1], img.data[2]
    w = LUMA_WEIGHTS
    return (w[0] * r + w[1] * g + w[2] * b).astype(np.float64)


def ssim(a: FeatureMap, b: FeatureMap) -> float:
    """Mean local SSIM on luma; 8x8 sliding window, stride 1, L = 2."""
    if a.data.shape != b.data.shape:
        raise ValueError(f"shape mismatch: {a.data.shape} vs {b.data.shape}")
    x, y = _luma(a), _luma(b)
    h, w = x.shape
    if h < SSIM_WINDOW or w < SSIM_WINDOW:
        raise ValueError(f"image {h}x{w} smaller than the {SSIM_WINDOW}px window")
    L = 2.0  # value range of [-1, 1] data
    c1, c2 = (0.01 * L) ** 2, (0.03 * L) ** 2

    def win_mean(z: np.ndarray) -> np.ndarray:
        # uniform_filter centers the window; crop to the valid region so each
        # output is the mean of one full 8x8 window
        m = uniform_filter(z, size=SSIM_WINDOW, mode="constant", origin=-(SSIM_WINDOW // 2))
        return m[: h - SSIM_WINDOW + 1, : w - SSIM_WINDOW + 1]

    mx, my = win_mean(x), win_mean(y)
    mxx, myy, mxy = win_mean(x * x), win_mean(y * y), win_mean(x * y)
    vx = mxx - mx * mx
    vy = myy - my * my
    cxy = mxy - mx * my
    num = (2 * mx * my + c1) * (2 * cxy + c2)
    den = (mx * mx + my * my + c1) * (vx + vy + c2)
    return float(np.mean(num / den))


def evaluate(
    out: FeatureMap,
    src: FeatureMap,
    ref: FeatureMap,
    src_mask: LabelMask,
    ref_mask: LabelMask,
    mt: np.ndarray,
    fxhat: FeaturePyramid | None = None,
    encoder_cfg: EncoderConfig | None = None,
    ref_pyramid: FeaturePyramid | None = None,
) -> MetricReport:
    out_pyr = encode_builtin(out, encoder_cfg)
    con = content_distance(out, src, mt)
    cos = 0.0
    if fxhat is not None:
        for l in range(4):
            cos += _rms(out_pyr.levels[l].data - fxhat.levels[l].data)
    if ref_pyramid is None:
        ref_pyramid = encode_builtin(ref, encoder_cfg)
    sty = _style_from_pyramids(out_pyr, ref_pyramid)
    mkp = makeup_distance(out, src, ref, src_mask, ref_mask)
    total = (
        LAMBDA_MAKEUP * mkp + LAMBDA_COS * cos + LAMBDA_STY * sty + LAMBDA_CON * con
    )
    return MetricReport(
        content=con,
        cosmetic=cos,
        style=sty,
        makeup=mkp,
        total=total,
        ssim=ssim(out, src),
    )
