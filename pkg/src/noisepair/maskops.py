"""Binary-mask geometry: morphology, bounding boxes, resampling and filters.

Masks are H x W boolean grids. Morphology uses a square (2r+1) x (2r+1)
structuring element clipped at the image borders, so a full frame erodes to
itself and dilation never wraps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

__all__ = [
    "BinaryMask",
    "BBox",
    "FilterDecision",
    "morph",
    "clean_reference_mask",
    "to_bbox_mask",
    "resample_to_latent",
    "size_filter",
    "boundary_region",
    "default_clean_radius",
    "default_boundary_dilate_radius",
    "load_mask",
    "save_mask",
]


@dataclass(frozen=True)
class BinaryMask:
    """H x W boolean grid. Empty masks are representable; use is_empty."""

    bits: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.bits)
        if b.ndim != 2:
            raise ValueError(f"mask must be H x W, got shape {b.shape}")
        if min(b.shape) < 1:
            raise ValueError(f"mask dimensions must be positive, got {b.shape}")
        object.__setattr__(self, "bits", b.astype(bool))

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def popcount(self) -> int:
        return int(self.bits.sum())

    @property
    def is_empty(self) -> bool:
        return not self.bits.any()

    @classmethod
    def full(cls, height: int, width: int) -> "BinaryMask":
        return cls(np.ones((height, width), dtype=bool))

    @classmethod
    def empty(cls, height: int, width: int) -> "BinaryMask":
        return cls(np.zeros((height, width), dtype=bool))


@dataclass(frozen=True)
class BBox:
    """Inclusive pixel bounding box."""

    row_min: int
    col_min: int
    row_max: int
    col_max: int

    def __post_init__(self):
        if self.row_min > self.row_max or self.col_min > self.col_max:
            raise ValueError(f"degenerate bbox {self}")

    @property
    def height(self) -> int:
        return self.row_max - self.row_min + 1

    @property
    def width(self) -> int:
        return self.col_max - self.col_min + 1

    @classmethod
    def of_mask(cls, mask: BinaryMask) -> "BBox":
        if mask.is_empty:
            raise ValueError("cannot take the bounding box of an empty mask")
        rows = np.flatnonzero(mask.bits.any(axis=1))
        cols = np.flatnonzero(mask.bits.any(axis=0))
        return cls(int(rows[0]), int(cols[0]), int(rows[-1]), int(cols[-1]))


@dataclass(frozen=True)
class FilterDecision:
    accepted: bool
    reason: str | None = None


def morph(mask: BinaryMask, mode: str, radius: int) -> BinaryMask:
    """Erode or dilate with a square structuring element of radius ``radius``."""
    if radius < 0:
        raise ValueError(f"radius must be >= 0, got {radius}")
    if mode not in ("erode", "dilate"):
        raise ValueError(f"mode must be 'erode' or 'dilate', got {mode!r}")
    if radius == 0:
        return BinaryMask(mask.bits.copy())
    struct = np.ones((2 * radius + 1, 2 * radius + 1), dtype=bool)
    if mode == "erode":
        # border_value=1 treats out-of-bounds as set, i.e. the element is
        # clipped at the border instead of eating into it.
        out = ndimage.binary_erosion(mask.bits, structure=struct, border_value=1)
    else:
        out = ndimage.binary_dilation(mask.bits, structure=struct, border_value=0)
    return BinaryMask(out)


def clean_reference_mask(mask: BinaryMask, radius: int) -> BinaryMask:
    """Morphological opening: erode then dilate with the same radius.

    Removes speckles and protrusions thinner than 2*radius+1. The result may
    come back empty (all structure below the element size); callers decide
    whether that rejects the sample.
    """
    return morph(morph(mask, "erode", radius), "dilate", radius)


def to_bbox_mask(mask: BinaryMask, margin: int = 0) -> BinaryMask:
    """Filled axis-aligned rectangle covering all set pixels, grown by margin."""
    if mask.is_empty:
        raise ValueError("cannot build a bounding-box mask from an empty mask")
    if margin < 0:
        raise ValueError(f"margin must be >= 0, got {margin}")
    box = BBox.of_mask(mask)
    out = np.zeros_like(mask.bits)
    r0 = max(box.row_min - margin, 0)
    c0 = max(box.col_min - margin, 0)
    r1 = min(box.row_max + margin, mask.height - 1)
    c1 = min(box.col_max + margin, mask.width - 1)
    out[r0 : r1 + 1, c0 : c1 + 1] = True
    return BinaryMask(out)


def _axis_weights(src: int, dst: int) -> np.ndarray:
    """dst x src resampling weights for one axis.

    Downsampling uses exact area averaging (each output cell averages its
    fractional cover of input cells); upsampling picks the nearest input
    pixel by center.
    """
    if dst == src:
        return np.eye(dst)
    w = np.zeros((dst, src))
    if dst < src:
        scale = src / dst
        for i in range(dst):
            lo = i * scale
            hi = (i + 1) * scale
            j0 = int(math.floor(lo))
            j1 = int(math.ceil(hi))
            for j in range(j0, min(j1, src)):
                cover = min(hi, j + 1) - max(lo, j)
                if cover > 0:
                    w[i, j] = cover / scale
    else:
        for i in range(dst):
            j = min(int((i + 0.5) * src / dst), src - 1)
            w[i, j] = 1.0
    return w


def resample_to_latent(mask: BinaryMask, target_h: int, target_w: int) -> BinaryMask:
    """Resample a pixel-space mask to latent resolution.

    Area-average then threshold at 0.5 with ties counted as set; pure
    upsampling reduces to nearest neighbor.
    """
    if target_h < 1 or target_w < 1:
        raise ValueError("target dimensions must be >= 1")
    wh = _axis_weights(mask.height, target_h)
    ww = _axis_weights(mask.width, target_w)
    avg = wh @ mask.bits.astype(np.float64) @ ww.T
    # ties -> set; the epsilon absorbs float error in the area weights
    return BinaryMask(avg >= 0.5 - 1e-9)


def size_filter(mask: BinaryMask, image_h: int, image_w: int) -> FilterDecision:
    """Accept masks whose bbox extent per axis lies in [1/5, 3/4] of the image.

    Comparisons are strict and done on exact integer cross-products, so
    boundary cases (exactly 3/4 or exactly 1/5) are accepted.
    """
    if mask.is_empty:
        return FilterDecision(False, "empty mask")
    if mask.height != image_h or mask.width != image_w:
        raise ValueError(
            f"mask shape {(mask.height, mask.width)} does not match image {(image_h, image_w)}"
        )
    box = BBox.of_mask(mask)
    if 4 * box.height > 3 * image_h:
        return FilterDecision(False, f"mask height {box.height} > 3/4 of image height {image_h}")
    if 4 * box.width > 3 * image_w:
        return FilterDecision(False, f"mask width {box.width} > 3/4 of image width {image_w}")
    if 5 * box.height < image_h:
        return FilterDecision(False, f"mask height {box.height} < 1/5 of image height {image_h}")
    if 5 * box.width < image_w:
        return FilterDecision(False, f"mask width {box.width} < 1/5 of image width {image_w}")
    return FilterDecision(True, None)


def boundary_region(fine_mask: BinaryMask, dilate_radius: int, rect_margin: int) -> BinaryMask:
    """Rectangle-minus-dilated-mask band around an object.

    Dilate the fine mask, expand the result into its bounding rectangle, and
    return the rectangle with the dilated mask removed. Subtracting the
    dilated mask (not the raw one) keeps a safety band of object-adjacent
    pixels out of the region. May be empty when the dilated mask fills its
    own rectangle.
    """
    if fine_mask.is_empty:
        raise ValueError("boundary region of an empty mask is undefined")
    dilated = morph(fine_mask, "dilate", dilate_radius)
    rect = to_bbox_mask(dilated, rect_margin)
    return BinaryMask(rect.bits & ~dilated.bits)


def default_clean_radius(height: int, width: int) -> int:
    """Reference-crop cleaning radius: 1% of the short side, at least 1."""
    return max(1, math.ceil(0.01 * min(height, width)))


def default_boundary_dilate_radius(height: int, width: int) -> int:
    """Boundary-region dilation radius: 2% of the short side, at least 1."""
    return max(1, math.ceil(0.02 * min(height, width)))


def load_mask(path: str | Path) -> BinaryMask:
    """Load a mask from an 8-bit single-channel PNG; nonzero = set."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"))
    return BinaryMask(arr != 0)


def save_mask(mask: BinaryMask, path: str | Path) -> None:
    """Save a mask as an 8-bit single-channel PNG (255 = set)."""
    Image.fromarray(mask.bits.astype(np.uint8) * 255, mode="L").save(path, format="PNG")
