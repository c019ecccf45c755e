"""Feature pyramid producers.

The built-in encoder is a classical anti-aliased Gaussian pyramid whose
finest level carries the raw RGB channels (the renderer depends on that),
optionally augmented with Sobel gradient-magnitude channels. Externally
computed pyramids can be imported from four SPT files instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import convolve1d

from .tensor import FeatureMap, FeaturePyramid, level_size, load_tensor

BINOMIAL_5 = np.array([1.0, 4.0, 6.0, 4.0, 1.0], dtype=np.float32) / 16.0


class PyramidScheduleError(ValueError):
    """Raised when imported levels do not follow the 1, 1/2, 1/4, 1/8 schedule."""


@dataclass(frozen=True)
class EncoderConfig:
    mode: str = "builtin"  # "builtin" | "external"
    gradient_channels: bool = True
    external_paths: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.mode not in ("builtin", "external"):
            raise ValueError(f"unknown encoder mode {self.mode!r}")
        if self.mode == "external" and len(self.external_paths) != 4:
            raise ValueError(
                f"external mode needs exactly 4 paths, got {len(self.external_paths)}"
            )


def _blur_decimate(data: np.ndarray) -> np.ndarray:
    """5x5 binomial blur (separable, reflect padding) followed by 2x decimation."""
    blurred = convolve1d(data, BINOMIAL_5, axis=1, mode="reflect")
    blurred = convolve1d(blurred, BINOMIAL_5, axis=2, mode="reflect")
    return np.ascontiguousarray(blurred[:, ::2, ::2])


def _sobel_magnitude(channel: np.ndarray) -> np.ndarray:
    kx = np.array([1.0, 0.0, -1.0], dtype=np.float32)
    ks = np.array([1.0, 2.0, 1.0], dtype=np.float32)
    gx = convolve1d(convolve1d(channel, kx, axis=1, mode="reflect"), ks, axis=0, mode="reflect")
    gy = convolve1d(convolve1d(channel, kx, axis=0, mode="reflect"), ks, axis=1, mode="reflect")
    return np.sqrt(gx * gx + gy * gy)


def encode_builtin(image: FeatureMap, cfg: EncoderConfig | None = None) -> FeaturePyramid:
    """Build the 4-level pyramid; level-1 channels 0-2 are the input RGB."""
    cfg = cfg or EncoderConfig()
    if image.channels != 3:
        raise ValueError(f"encoder needs a 3-channel image, got {image.channels}")
    base = image.data
    if cfg.gradient_channels:
        grads = np.stack([_sobel_magnitude(base[c]) for c in range(3)])
        base = np.concatenate([base, grads.astype(np.float32)])
    levels = [FeatureMap(base)]
    for _ in range(3):
        levels.append(FeatureMap(_blur_decimate(levels[-1].data)))
    return FeaturePyramid(tuple(levels), carries_rgb=True)


def import_pyramid(cfg: EncoderConfig) -> FeaturePyramid:
    """Load 4 SPT files and validate the spatial scale schedule."""
    maps = [load_tensor(p) for p in cfg.external_paths]
    bh, bw = maps[0].height, maps[0].width
    for l, fm in enumerate(maps, start=1):
        eh, ew = level_size(bh, l), level_size(bw, l)
        if (fm.height, fm.width) != (eh, ew):
            raise PyramidScheduleError(
                f"level {l} ({cfg.external_paths[l - 1]}) is "
                f"{fm.height}x{fm.width}, schedule expects {eh}x{ew}"
            )
    return FeaturePyramid(tuple(maps), carries_rgb=False)


def encode(image: FeatureMap, cfg: EncoderConfig | None = None) -> FeaturePyramid:
    cfg = cfg or EncoderConfig()
    if cfg.mode == "external":
        return import_pyramid(cfg)
    return encode_builtin(image, cfg)
