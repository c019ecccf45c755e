"""Dense feature/mask containers and file I/O shared by every other module.

All pixel data lives in numpy float32 arrays laid out channel-major
(c, h, w). Images travel as 3-channel maps with values in [-1, 1]; label
masks use the 19-class convention from :mod:`spmt.labels`.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .labels import NUM_LABELS

SPT_MAGIC = b"SPT1"
SPT_DTYPE_F32 = 0x01

WORKING_SIZE = 256  # fixed working resolution for images and masks


class SptFormatError(ValueError):
    """Raised on a malformed SPT container (bad magic, dtype, truncation)."""


class InvalidLabelError(ValueError):
    """Raised when a label mask contains an id outside [0, 18]."""


class ImageFormatError(ValueError):
    """Raised when an image file cannot be decoded as 8-bit RGB PNG."""


@dataclass(frozen=True)
class FeatureMap:
    """A c x h x w grid of float32 values."""

    data: np.ndarray  # shape (c, h, w), float32

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.float32)
        if arr.ndim != 3:
            raise ValueError(f"FeatureMap needs a 3-d array, got ndim={arr.ndim}")
        if min(arr.shape) < 1:
            raise ValueError(f"FeatureMap dims must be positive, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("FeatureMap values must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class FeaturePyramid:
    """Four FeatureMaps at spatial factors 1, 1/2, 1/4, 1/8.

    ``carries_rgb`` marks pyramids whose level-1 channels 0-2 are the raw
    input image; the renderer refuses pyramids without that contract.
    """

    levels: tuple[FeatureMap, ...]
    carries_rgb: bool = False

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(self.levels))
        if len(self.levels) != 4:
            raise ValueError(f"pyramid needs 4 levels, got {len(self.levels)}")
        bh, bw = self.levels[0].height, self.levels[0].width
        for l, fm in enumerate(self.levels, start=1):
            eh, ew = level_size(bh, l), level_size(bw, l)
            if (fm.height, fm.width) != (eh, ew):
                raise ValueError(
                    f"level {l} is {fm.height}x{fm.width}, expected {eh}x{ew} "
                    f"for base {bh}x{bw}"
                )

    @property
    def base_height(self) -> int:
        return self.levels[0].height

    @property
    def base_width(self) -> int:
        return self.levels[0].width


def level_size(base: int, level: int) -> int:
    """Spatial extent of pyramid level ``level`` (1-based) for a given base."""
    return -(-base // (2 ** (level - 1)))  # ceil division


@dataclass(frozen=True)
class LabelMask:
    """Per-pixel integer face-parsing labels in [0, 18]."""

    labels: np.ndarray  # shape (h, w), uint8

    def __post_init__(self):
        arr = np.ascontiguousarray(self.labels, dtype=np.uint8)
        if arr.ndim != 2:
            raise ValueError("LabelMask needs a 2-d array")
        if arr.size and arr.max() >= NUM_LABELS:
            pos = np.unravel_index(int(np.argmax(arr >= NUM_LABELS)), arr.shape)
            raise InvalidLabelError(
                f"label {int(arr[pos])} at (row={pos[0]}, col={pos[1]}) "
                f"exceeds maximum {NUM_LABELS - 1}"
            )
        arr.setflags(write=False)
        object.__setattr__(self, "labels", arr)

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]


@dataclass(frozen=True)
class OneHotMask:
    """One channel per semantic class; exactly one channel is 1 per pixel."""

    data: np.ndarray  # shape (sem_channels, h, w), float32 in {0, 1}

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.float32)
        if arr.ndim != 3:
            raise ValueError("OneHotMask needs a 3-d array")
        sums = arr.sum(axis=0)
        if not (np.all((arr == 0) | (arr == 1)) and np.all(sums == 1)):
            raise ValueError("mask is not strictly one-hot")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def sem_channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    def to_labels(self) -> np.ndarray:
        return np.argmax(self.data, axis=0).astype(np.uint8)


@dataclass(frozen=True)
class MaskPyramid:
    """One-hot masks at the four pyramid scales."""

    levels: tuple[OneHotMask, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(self.levels))
        if len(self.levels) != 4:
            raise ValueError(f"mask pyramid needs 4 levels, got {len(self.levels)}")


# ---------------------------------------------------------------------------
# image / mask I/O


def load_image(path) -> FeatureMap:
    """Load an 8-bit RGB PNG into a 3 x 256 x 256 map with values in [-1, 1]."""
    try:
        img = Image.open(path)
        img.load()
    except Exception as exc:
        raise ImageFormatError(f"cannot read image {path}: {exc}") from exc
    if img.mode != "RGB":
        raise ImageFormatError(f"{path}: expected RGB image, got mode {img.mode}")
    if img.size != (WORKING_SIZE, WORKING_SIZE):
        img = img.resize((WORKING_SIZE, WORKING_SIZE), Image.BILINEAR)
    arr = np.asarray(img, dtype=np.float32)  # (h, w, 3)
    arr = arr / 255.0 * 2.0 - 1.0
    return FeatureMap(arr.transpose(2, 0, 1))


def save_image(fmap: FeatureMap, path) -> None:
    """Clamp to [-1, 1] and write as 8-bit RGB PNG."""
    if fmap.channels != 3:
        raise ValueError(f"save_image needs a 3-channel map, got {fmap.channels}")
    clamped = np.clip(fmap.data, -1.0, 1.0)
    pixels = np.round((clamped + 1.0) / 2.0 * 255.0).astype(np.uint8)
    Image.fromarray(pixels.transpose(1, 2, 0), mode="RGB").save(path, format="PNG")


def load_label_mask(path) -> LabelMask:
    """Load a single-channel 8-bit PNG of label ids, resized nearest-neighbor."""
    try:
        img = Image.open(path)
        img.load()
    except Exception as exc:
        raise ImageFormatError(f"cannot read mask {path}: {exc}") from exc
    if img.mode != "L":
        img = img.convert("L")
    if img.size != (WORKING_SIZE, WORKING_SIZE):
        img = img.resize((WORKING_SIZE, WORKING_SIZE), Image.NEAREST)
    return LabelMask(np.asarray(img, dtype=np.uint8))


def save_label_mask(mask: LabelMask, path) -> None:
    Image.fromarray(mask.labels, mode="L").save(path, format="PNG")


def one_hot(mask: LabelMask) -> OneHotMask:
    """Expand label ids into the 19-channel one-hot form."""
    data = np.zeros((NUM_LABELS, mask.height, mask.width), dtype=np.float32)
    rows, cols = np.indices(mask.labels.shape)
    data[mask.labels, rows, cols] = 1.0
    return OneHotMask(data)


def downsample_mask(mask: OneHotMask, factor: int) -> OneHotMask:
    """Majority-vote block downsampling; ties go to the smallest label id."""
    if factor not in (1, 2, 4, 8):
        raise ValueError(f"factor must be one of 1, 2, 4, 8, got {factor}")
    if factor == 1:
        return mask
    c, h, w = mask.data.shape
    oh, ow = -(-h // factor), -(-w // factor)
    padded = np.zeros((c, oh * factor, ow * factor), dtype=np.float32)
    padded[:, :h, :w] = mask.data
    counts = padded.reshape(c, oh, factor, ow, factor).sum(axis=(2, 4))
    # argmax returns the first (smallest) index on ties
    winners = np.argmax(counts, axis=0)
    out = np.zeros((c, oh, ow), dtype=np.float32)
    rows, cols = np.indices(winners.shape)
    out[winners, rows, cols] = 1.0
    return OneHotMask(out)


def downsample_binary(mask: np.ndarray, factor: int) -> np.ndarray:
    """Majority-vote downsampling of a single-channel binary mask; ties -> 0."""
    if factor == 1:
        return mask.astype(np.float32)
    h, w = mask.shape
    oh, ow = -(-h // factor), -(-w // factor)
    padded = np.zeros((oh * factor, ow * factor), dtype=np.float32)
    padded[:h, :w] = mask
    counts = padded.reshape(oh, factor, ow, factor).sum(axis=(1, 3))
    return (counts > factor * factor / 2.0).astype(np.float32)


def mask_pyramid(mask: OneHotMask) -> MaskPyramid:
    return MaskPyramid(tuple(downsample_mask(mask, 2 ** l) for l in range(4)))


def binary_mask_pyramid(mask: np.ndarray) -> tuple[np.ndarray, ...]:
    return tuple(downsample_binary(mask, 2 ** l) for l in range(4))


# ---------------------------------------------------------------------------
# SPT tensor container


def save_tensor(fmap: FeatureMap, path) -> None:
    """Write the bit-exact SPT container: magic, dtype, ndim, dims, payload."""
    c, h, w = fmap.data.shape
    header = SPT_MAGIC + struct.pack("<BB", SPT_DTYPE_F32, 3)
    header += struct.pack("<3I", c, h, w)
    payload = fmap.data.astype("<f4", copy=False).tobytes()
    with open(path, "wb") as f:
        f.write(header)
        f.write(payload)


def load_tensor(path) -> FeatureMap:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 6 or raw[:4] != SPT_MAGIC:
        raise SptFormatError(f"{path}: bad magic bytes (expected {SPT_MAGIC!r})")
    dtype_code, ndim = raw[4], raw[5]
    if dtype_code != SPT_DTYPE_F32:
        raise SptFormatError(f"{path}: unsupported dtype code {dtype_code:#x}")
    dims_end = 6 + 4 * ndim
    if len(raw) < dims_end:
        raise SptFormatError(f"{path}: truncated header")
    dims = struct.unpack(f"<{ndim}I", raw[6:dims_end])
    if ndim != 3:
        raise SptFormatError(f"{path}: expected 3 dims, got {ndim}")
    expected = int(np.prod(dims)) * 4
    payload = raw[dims_end:]
    if len(payload) != expected:
        raise SptFormatError(
            f"{path}: payload holds {len(payload) // 4} floats, "
            f"shape {dims} needs {expected // 4}"
        )
    data = np.frombuffer(payload, dtype="<f4").reshape(dims)
    return FeatureMap(data.copy())
