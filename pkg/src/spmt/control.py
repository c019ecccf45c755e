"""Controllable edits over reconstructed pyramids: shade interpolation,
multi-reference fusion, part-specific mixing, makeup removal, and the
transfer-mask construction they all share."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.ndimage import distance_transform_edt

from . import labels as lbl
from .sac import SacConfig, alpha_blend
from .tensor import FeatureMap, FeaturePyramid, LabelMask

PARTS = ("lips", "eyes", "skin")
DEFAULT_EYE_DILATION = 12  # px at the 256x256 working resolution

WEIGHT_SUM_TOL = 1e-6


class RecipeError(ValueError):
    """Raised when a TransferRecipe violates its invariants."""


@dataclass(frozen=True)
class TransferRecipe:
    """User intent for one transfer.

    Canonical JSON form (used by the CLI and service)::

        {
          "shade": 1.0,                    // w in [0, 1]
          "refWeights": [0.5, 0.5],        // multi-reference fusion, sums to 1
          "partAssignment": {"lips": 0, "eyes": 1, "skin": 2},  // or null
          "transferParts": ["lips", "eyes", "skin"],
          "removal": false,
          "mode": "semantic_soft", "beta": 100.0,               // optional
          "alphas": [1.0, 0.4, 0.2, 0.1],                       // optional
          "noHm": false, "feather": 3                           // optional
        }
    """

    shade: float = 1.0
    ref_weights: tuple[float, ...] = (1.0,)
    part_assignment: Mapping[str, int] | None = None
    transfer_parts: tuple[str, ...] = PARTS
    removal: bool = False

    def __post_init__(self):
        if not 0.0 <= self.shade <= 1.0:
            raise RecipeError(f"shade must lie in [0, 1], got {self.shade}")
        object.__setattr__(self, "ref_weights", tuple(self.ref_weights))
        object.__setattr__(self, "transfer_parts", tuple(self.transfer_parts))
        if any(w < 0 for w in self.ref_weights):
            raise RecipeError("reference weights must be nonnegative")
        if abs(sum(self.ref_weights) - 1.0) > WEIGHT_SUM_TOL:
            raise RecipeError(
                f"reference weights must sum to 1, got {sum(self.ref_weights)}"
            )
        for p in self.transfer_parts:
            if p not in PARTS:
                raise RecipeError(f"unknown part {p!r}, expected one of {PARTS}")
        if self.part_assignment is not None:
            n = len(self.ref_weights)
            for p, r in self.part_assignment.items():
                if p not in PARTS:
                    raise RecipeError(f"unknown part {p!r} in assignment")
                if not 0 <= r < n:
                    raise RecipeError(
                        f"part {p!r} assigned to reference {r}, only {n} loaded"
                    )

    def to_json_dict(self) -> dict:
        return {
            "shade": self.shade,
            "refWeights": list(self.ref_weights),
            "partAssignment": dict(self.part_assignment)
            if self.part_assignment is not None
            else None,
            "transferParts": list(self.transfer_parts),
            "removal": self.removal,
        }

    @classmethod
    def from_json_dict(cls, d: Mapping) -> "TransferRecipe":
        return cls(
            shade=float(d.get("shade", 1.0)),
            ref_weights=tuple(d.get("refWeights", [1.0])),
            part_assignment=d.get("partAssignment"),
            transfer_parts=tuple(d.get("transferParts", PARTS)),
            removal=bool(d.get("removal", False)),
        )


def shade_interpolate(
    fxhat: FeaturePyramid, fx: FeaturePyramid, w: float
) -> FeaturePyramid:
    """Per level: w * reconstructed + (1 - w) * source."""
    if not 0.0 <= w <= 1.0:
        raise RecipeError(f"shade must lie in [0, 1], got {w}")
    levels = tuple(
        alpha_blend(fxhat.levels[l], fx.levels[l], w) for l in range(4)
    )
    return FeaturePyramid(levels, carries_rgb=fx.carries_rgb)


def fuse_references(
    fxhats: Sequence[FeaturePyramid], weights: Sequence[float]
) -> FeaturePyramid:
    if len(fxhats) != len(weights):
        raise RecipeError(
            f"{len(fxhats)} pyramids but {len(weights)} weights"
        )
    if not fxhats:
        raise RecipeError("need at least one pyramid")
    if any(w < 0 for w in weights):
        raise RecipeError("fusion weights must be nonnegative")
    if abs(sum(weights) - 1.0) > WEIGHT_SUM_TOL:
        raise RecipeError(f"fusion weights must sum to 1, got {sum(weights)}")
    if len(fxhats) == 1:
        return fxhats[0]
    levels = []
    for l in range(4):
        acc = np.zeros_like(fxhats[0].levels[l].data, dtype=np.float64)
        for pyr, w in zip(fxhats, weights):
            acc += w * pyr.levels[l].data
        levels.append(FeatureMap(acc.astype(np.float32)))
    return FeaturePyramid(tuple(levels), carries_rgb=fxhats[0].carries_rgb)


def assign_parts(
    fxhats: Mapping[str, FeaturePyramid],
    fx: FeaturePyramid,
    part_masks: Mapping[str, tuple[np.ndarray, ...]],
    mt_levels: tuple[np.ndarray, ...],
) -> FeaturePyramid:
    """Per level: sum of part-masked reconstructions plus the untouched rest.

    ``fxhats`` maps part name -> that part's assigned reconstruction;
    ``part_masks`` maps part name -> per-level binary masks. Part masks must
    be pairwise disjoint and contained in the transfer mask.
    """
    for l in range(4):
        stack = [part_masks[p][l] for p in fxhats]
        if stack:
            total = np.sum(stack, axis=0)
            if np.any(total > 1):
                raise RecipeError(f"part masks overlap at level {l + 1}")
            if np.any(total > mt_levels[l]):
                raise RecipeError(
                    f"part mask escapes the transfer mask at level {l + 1}"
                )
    levels = []
    for l in range(4):
        out = fx.levels[l].data.copy()
        for part, pyr in fxhats.items():
            sel = part_masks[part][l] >= 0.5
            out[:, sel] = pyr.levels[l].data[:, sel]
        levels.append(FeatureMap(out))
    return FeaturePyramid(tuple(levels), carries_rgb=fx.carries_rgb)


def _label_region(mask: LabelMask, ids: Sequence[int]) -> np.ndarray:
    return np.isin(mask.labels, ids)


def dilate_disk(region: np.ndarray, radius: int) -> np.ndarray:
    """Euclidean dilation of a binary region by a disk of the given radius."""
    if radius <= 0 or not region.any():
        return region.copy()
    dist = distance_transform_edt(~region)
    return dist <= radius


def _eye_ring(mask: LabelMask, dilation_radius: int) -> np.ndarray:
    eyes = _label_region(mask, lbl.EYE_LABELS)
    ring = dilate_disk(eyes, dilation_radius) & ~eyes
    ring &= ~_label_region(mask, lbl.NEVER_TRANSFER_LABELS)
    ring &= ~_label_region(mask, lbl.LIP_LABELS)
    return ring


def part_region(
    mask: LabelMask, part: str, dilation_radius: int = DEFAULT_EYE_DILATION
) -> np.ndarray:
    """Binary region for one part, with disjointness between parts enforced:
    the eye-shadow ring wins over skin, lips win over both."""
    if part == "lips":
        return _label_region(mask, lbl.LIP_LABELS)
    if part == "eyes":
        return _eye_ring(mask, dilation_radius)
    if part == "skin":
        skin = _label_region(mask, lbl.SKIN_LABELS)
        skin &= ~_label_region(mask, lbl.NEVER_TRANSFER_LABELS)
        skin &= ~_label_region(mask, lbl.LIP_LABELS)
        return skin & ~_eye_ring(mask, dilation_radius)
    raise RecipeError(f"unknown part {part!r}")


def build_transfer_mask(
    mask: LabelMask,
    parts: Sequence[str] = PARTS,
    dilation_radius: int = DEFAULT_EYE_DILATION,
) -> np.ndarray:
    """Union of the selected part regions as a float binary mask."""
    out = np.zeros((mask.height, mask.width), dtype=bool)
    for p in parts:
        out |= part_region(mask, p, dilation_radius)
    return out.astype(np.float32)


def makeup_removal(
    makeup_pyr: FeaturePyramid,
    nonmakeup_pyr: FeaturePyramid,
    makeup_masks,
    nonmakeup_masks,
    mt_levels,
    cfg: SacConfig | None = None,
    threads: int | None = None,
):
    """Removal is transfer with swapped roles: the made-up face is the source,
    the clean face is the reference. Same kernel, same renderer downstream."""
    from .sac import sac_full

    return sac_full(
        makeup_pyr, nonmakeup_pyr, makeup_masks, nonmakeup_masks,
        mt_levels, cfg, threads,
    )
