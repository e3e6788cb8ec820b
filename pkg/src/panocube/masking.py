"""Rectangular training masks and hole application.

Masks follow the package-wide convention: 0 marks a damaged (hole) pixel,
1 a valid pixel. Rectangle sizes are drawn uniformly from
[ceil(dim/4), floor(dim/2)] per axis, and the rectangle is placed uniformly
among positions fully inside the image.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ValidationError


@dataclass(frozen=True)
class RectSpec:
    """Axis-aligned hole rectangle: top-left corner plus size, in pixels."""

    x0: int
    y0: int
    width: int
    height: int


def _as_rng(rng):
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def sample_rect_mask(rng, width, height):
    """Draw one hole rectangle and return (mask, RectSpec).

    ``rng`` is a numpy Generator or a seed. Draw order is fixed
    (R_w, R_h, x0, y0) so equal seeds give bit-identical masks.
    The mask is a float32 (height, width) array of {0, 1}.
    """
    if width < 8 or height < 8:
        raise ConfigurationError(
            f"image {width}x{height} too small for the hole size bounds (min 8x8)"
        )
    rng = _as_rng(rng)
    lo_w, hi_w = -(-width // 4), width // 2
    lo_h, hi_h = -(-height // 4), height // 2
    r_w = int(rng.integers(lo_w, hi_w + 1))
    r_h = int(rng.integers(lo_h, hi_h + 1))
    x0 = int(rng.integers(0, width - r_w + 1))
    y0 = int(rng.integers(0, height - r_h + 1))
    mask = np.ones((height, width), dtype=np.float32)
    mask[y0 : y0 + r_h, x0 : x0 + r_w] = 0.0
    return mask, RectSpec(x0, y0, r_w, r_h)


def rect_to_mask(rect, width, height):
    """Build the {0,1} mask described by a RectSpec."""
    if (
        rect.width < 1
        or rect.height < 1
        or rect.x0 < 0
        or rect.y0 < 0
        or rect.x0 + rect.width > width
        or rect.y0 + rect.height > height
    ):
        raise ValidationError(f"{rect} does not fit inside {width}x{height}")
    mask = np.ones((height, width), dtype=np.float32)
    mask[rect.y0 : rect.y0 + rect.height, rect.x0 : rect.x0 + rect.width] = 0.0
    return mask


def apply_mask(img, mask, fill=0.5):
    """Replace hole pixels with ``fill``: mask*img + (1-mask)*fill."""
    img = np.asarray(img)
    mask = np.asarray(mask)
    if mask.shape != img.shape[: mask.ndim] or img.ndim - mask.ndim not in (0, 1):
        raise ValidationError(
            f"mask shape {mask.shape} does not match image shape {img.shape}"
        )
    if img.ndim == mask.ndim + 1:
        mask = mask[..., None]
    if np.issubdtype(img.dtype, np.floating):
        # keep the fill at image precision; a float32 mask would otherwise
        # round it before the blend
        mask = mask.astype(img.dtype, copy=False)
    return mask * img + (1.0 - mask) * fill
