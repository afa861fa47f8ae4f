"""Image preprocessing: target-size resolution, resize/pad, mask cropping."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable

import cv2
import numpy as np

MASK_CROP_PAD = 5  # px added around a line mask's bounding box


@dataclass(frozen=True)
class PreprocessSpec:
    """Fixed model-facing geometry for a dataset.

    Targets come from the training split's average dims; every image is
    fitted onto a target-sized canvas, then extended horizontally by
    ``horizontal_pad`` px per side. Fill is always the per-image median.
    """

    target_height: int
    target_width: int
    horizontal_pad: int = 64

    def __post_init__(self):
        if self.target_height <= 0 or self.target_width <= 0:
            raise ValueError("preprocess targets must be positive")
        if self.horizontal_pad < 0:
            raise ValueError("horizontal_pad must be >= 0")

    @property
    def output_height(self) -> int:
        return self.target_height

    @property
    def output_width(self) -> int:
        return self.target_width + 2 * self.horizontal_pad

    def snapped(self, multiple: int = 8) -> "PreprocessSpec":
        """Round geometry up so the encoder's /8 stride divides the output."""

        def up(v):
            return ((v + multiple - 1) // multiple) * multiple

        pad = self.horizontal_pad
        if (2 * pad) % multiple:
            pad = up(2 * pad) // 2
        return replace(
            self,
            target_height=up(self.target_height),
            target_width=up(self.target_width),
            horizontal_pad=pad,
        )


def compute_targets(dims: Iterable[tuple[int, int]], horizontal_pad: int = 64) -> PreprocessSpec:
    """Target dims = arithmetic mean of (width, height) pairs, rounded.

    Rounding is floor(x + 0.5) so .5 always rounds up, independent of
    banker's rounding.
    """
    dims = list(dims)
    if not dims:
        raise ValueError("cannot compute preprocessing targets from an empty split")
    mean_w = sum(w for w, _ in dims) / len(dims)
    mean_h = sum(h for _, h in dims) / len(dims)
    return PreprocessSpec(
        target_height=int(mean_h + 0.5),
        target_width=int(mean_w + 0.5),
        horizontal_pad=horizontal_pad,
    )


def resize_pad(image: np.ndarray, spec: PreprocessSpec) -> np.ndarray:
    """Fit an image to spec geometry: downscale-if-larger, center, pad.

    Upscaling never happens; smaller images are centered as-is. The canvas
    and the horizontal extension use the input image's median value.
    """
    img = np.asarray(image)
    if img.ndim != 2:
        raise ValueError(f"expected a 2-D grayscale image, got shape {img.shape}")
    h, w = img.shape
    if h == 0 or w == 0:
        raise ValueError("zero-area image")
    fill = int(np.median(img))

    if h > spec.target_height or w > spec.target_width:
        scale = min(spec.target_height / h, spec.target_width / w)
        new_h = max(1, min(spec.target_height, int(h * scale + 0.5)))
        new_w = max(1, min(spec.target_width, int(w * scale + 0.5)))
        img = cv2.resize(img, (new_w, new_h), interpolation=cv2.INTER_AREA)
        h, w = img.shape

    canvas = np.full((spec.output_height, spec.output_width), fill, dtype=np.uint8)
    y0 = (spec.target_height - h) // 2
    x0 = spec.horizontal_pad + (spec.target_width - w) // 2
    canvas[y0: y0 + h, x0: x0 + w] = img
    return canvas


def crop_line_from_mask(page: np.ndarray, mask: np.ndarray, pad: int = MASK_CROP_PAD) -> np.ndarray:
    """Crop one text line out of a page using its pixel mask.

    The crop is the mask's bounding box expanded by ``pad`` px (clamped to
    the page); pixels inside the crop but outside the mask are set to the
    page median so overlapping ascenders/descenders of neighbours vanish.
    """
    page = np.asarray(page)
    mask = np.asarray(mask)
    if page.shape != mask.shape:
        raise ValueError(f"mask shape {mask.shape} != page shape {page.shape}")
    ys, xs = np.nonzero(mask)
    if ys.size == 0:
        raise ValueError("empty line mask")
    y0 = max(0, int(ys.min()) - pad)
    y1 = min(page.shape[0], int(ys.max()) + pad + 1)
    x0 = max(0, int(xs.min()) - pad)
    x1 = min(page.shape[1], int(xs.max()) + pad + 1)
    background = int(np.median(page))
    crop = page[y0:y1, x0:x1].copy()
    crop[mask[y0:y1, x0:x1] == 0] = background
    return crop
