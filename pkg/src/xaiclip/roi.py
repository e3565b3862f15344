"""ROI mask derivation and patch-grid gating.

The importance map is min-max normalized, Gaussian-smoothed (kernel truncated
at 3 sigma and renormalized), then binarized either by a fixed threshold or
by keeping the top fraction of pixels (row-major tie-break).
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import (
    DegenerateImportanceError,
    DimensionMismatchError,
    ValidationError,
)
from .types import BinaryMask, PatchGrid, normalize01


@dataclass(frozen=True)
class RoiConfig:
    gauss_sigma: float = 2.0
    threshold: float = 0.5
    top_fraction: Optional[float] = None

    def __post_init__(self):
        if not (0.0 < self.threshold < 1.0):
            raise ValidationError("threshold must lie in (0, 1)")
        if self.top_fraction is not None and not (0.0 < self.top_fraction <= 1.0):
            raise ValidationError("top_fraction must lie in (0, 1]")
        if self.gauss_sigma < 0:
            raise ValidationError("gauss_sigma must be non-negative")


def binarize_importance(importance: np.ndarray, cfg: RoiConfig = RoiConfig()) -> BinaryMask:
    """Normalize, smooth, and binarize an importance map into an ROI mask."""
    values = np.asarray(importance, dtype=np.float64)
    if values.ndim != 2:
        raise DimensionMismatchError("importance map must be 2-D")
    if not np.isfinite(values).all():
        raise ValidationError("importance map must be finite-valued")
    values = normalize01(values)
    if cfg.gauss_sigma > 0:
        values = gaussian_filter(values, cfg.gauss_sigma, mode="nearest", truncate=3.0)

    if cfg.top_fraction is not None:
        n_keep = int(np.ceil(cfg.top_fraction * values.size))
        order = np.argsort(-values.ravel(), kind="stable")  # ties: row-major index
        mask = np.zeros(values.size, dtype=np.uint8)
        mask[order[:n_keep]] = 1
        return BinaryMask(mask.reshape(values.shape))

    if values.max() == values.min():
        raise DegenerateImportanceError("constant importance map cannot be thresholded")
    return BinaryMask((values >= cfg.threshold).astype(np.uint8))


def resize_mask_nn(mask: BinaryMask, target_w: int, target_h: int) -> BinaryMask:
    """Nearest-neighbor mask resize; output stays strictly binary."""
    if target_w < 1 or target_h < 1:
        raise ValidationError("target size must be >= 1")
    ys = (np.arange(target_h) * mask.height) // target_h
    xs = (np.arange(target_w) * mask.width) // target_w
    return BinaryMask(mask.data[np.ix_(ys, xs)])


def patch_grid(width: int, height: int, patch: int, stride: int) -> PatchGrid:
    """All (x, y) top-left corners at stride multiples with the patch inside."""
    if patch > min(width, height):
        raise ValidationError("patch larger than image")
    if stride < 1:
        raise ValidationError("stride must be >= 1")
    positions = [
        (x, y)
        for y in range(0, height - patch + 1, stride)
        for x in range(0, width - patch + 1, stride)
    ]
    return PatchGrid(patch_size=patch, stride=stride, positions=tuple(positions))


def gate_patches(grid: PatchGrid, roi: BinaryMask) -> PatchGrid:
    """Retain every patch that shares at least one pixel with the ROI."""
    p = grid.patch_size
    if grid.positions:
        if max(x for x, _ in grid.positions) + p > roi.width or \
           max(y for _, y in grid.positions) + p > roi.height:
            raise DimensionMismatchError("ROI smaller than the gated patch grid")
    retained = np.array(
        [bool(roi.data[y:y + p, x:x + p].any()) for x, y in grid.positions],
        dtype=bool,
    )
    return PatchGrid(
        patch_size=grid.patch_size,
        stride=grid.stride,
        positions=grid.positions,
        retained=retained,
    )
