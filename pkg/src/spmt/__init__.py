"""Non-parametric exemplar-based facial makeup transfer."""

from .control import TransferRecipe
from .encoder import EncoderConfig, encode_builtin, import_pyramid
from .sac import CorrespondenceField, PatchGrid, SacConfig, sac_full
from .synthesis import RenderConfig, hm_composite, render
from .tensor import (
    FeatureMap,
    FeaturePyramid,
    LabelMask,
    MaskPyramid,
    OneHotMask,
    load_image,
    load_label_mask,
    load_tensor,
    save_image,
    save_tensor,
)

__all__ = [
    "CorrespondenceField",
    "EncoderConfig",
    "FeatureMap",
    "FeaturePyramid",
    "LabelMask",
    "MaskPyramid",
    "OneHotMask",
    "PatchGrid",
    "RenderConfig",
    "SacConfig",
    "TransferRecipe",
    "encode_builtin",
    "hm_composite",
    "import_pyramid",
    "load_image",
    "load_label_mask",
    "load_tensor",
    "render",
    "sac_full",
    "save_image",
    "save_tensor",
]

__version__ = "0.1.0"
