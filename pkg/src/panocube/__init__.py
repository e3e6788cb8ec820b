"""panocube: 360-degree panorama inpainting toolkit.

Converts equirectangular panoramas to cube maps, trains a u-net generator
against whole-cube and per-face Wasserstein critics with a mask-weighted
gradient penalty, and evaluates inpainting quality with SSIM, PSNR, L1,
and L2.
"""

__version__ = "0.1.0"

from .errors import (
    CheckpointError,
    ConfigurationError,
    NumericalError,
    PanocubeError,
    ValidationError,
)
from .masking import RectSpec, apply_mask, sample_rect_mask
from .objectives import ObjectiveWeights
from .projection import (
    FACE_ORDER,
    PROJECTION_CONVENTION,
    cubemap_to_equirect,
    direction_to_face_uv,
    equirect_to_cubemap,
    face_uv_to_direction,
    mask_to_cubemap,
    pixel_to_direction,
)
from .training import TrainConfig, train

__all__ = [
    "CheckpointError",
    "ConfigurationError",
    "FACE_ORDER",
    "NumericalError",
    "ObjectiveWeights",
    "PROJECTION_CONVENTION",
    "PanocubeError",
    "RectSpec",
    "TrainConfig",
    "ValidationError",
    "apply_mask",
    "cubemap_to_equirect",
    "direction_to_face_uv",
    "equirect_to_cubemap",
    "face_uv_to_direction",
    "mask_to_cubemap",
    "pixel_to_direction",
    "sample_rect_mask",
    "train",
    "__version__",
]
