"""Adaptive contrast-enhancement pipeline for 8-bit grayscale inputs.

Stages: BT.601 grayscale conversion, area-interpolation resize to a square
target, intensity-threshold background masking, percentile-based linear
contrast stretching of the foreground, tile-wise contrast-limited histogram
equalization with inter-tile bilinear blending, and a selective blend that
leaves background pixels bit-identical to the resized original.

All intensity maps round half-up so outputs are platform-independent.
"""

from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatchError,
    NoForegroundError,
    TileTooLargeError,
    ValidationError,
)
from .types import BinaryMask, ImageGrid, round_half_up

DEFAULT_BACKGROUND_THRESHOLD = 20


@dataclass(frozen=True)
class PreprocessConfig:
    t_bg: int = DEFAULT_BACKGROUND_THRESHOLD
    pct_low: float = 5.0
    pct_high: float = 95.0
    clahe_clip: float = 2.0
    tile_grid: tuple = (8, 8)
    target_size: int = 224

    def __post_init__(self):
        if not (0 <= self.pct_low < self.pct_high <= 100):
            raise ValidationError("need 0 <= pct_low < pct_high <= 100")
        if self.clahe_clip <= 0:
            raise ValidationError("clahe_clip must be positive")
        if self.tile_grid[0] < 1 or self.tile_grid[1] < 1:
            raise ValidationError("tile_grid must be at least 1x1")
        if self.target_size < 1:
            raise ValidationError("target_size must be >= 1")


def to_grayscale(image: ImageGrid) -> ImageGrid:
    """BT.601 luma: Y = 0.299 R + 0.587 G + 0.114 B, rounded half-up."""
    if image.channels != 3:
        raise DimensionMismatchError("to_grayscale expects a 3-channel image")
    rgb = image.data.astype(np.float64)
    y = 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]
    return ImageGrid(round_half_up(y).astype(np.uint8))


def _area_weights(src: int, dst: int) -> np.ndarray:
    """dst x src matrix of box-average weights; every row sums to 1."""
    w = np.zeros((dst, src), dtype=np.float64)
    scale = src / dst
    for i in range(dst):
        lo = i * scale
        hi = (i + 1) * scale
        j0 = int(np.floor(lo))
        j1 = int(np.ceil(hi))
        for j in range(j0, min(j1, src)):
            overlap = min(hi, j + 1) - max(lo, j)
            if overlap > 0:
                w[i, j] = overlap
        w[i] /= w[i].sum()
    return w


def resize_area(image: ImageGrid, target: int) -> ImageGrid:
    """Resize to target x target; each output pixel averages its source box."""
    if target < 1:
        raise ValidationError("target size must be >= 1")
    if image.channels != 1:
        raise DimensionMismatchError("resize_area expects a grayscale image")
    if image.width == target and image.height == target:
        return image
    wr = _area_weights(image.height, target)
    wc = _area_weights(image.width, target)
    out = wr @ image.data.astype(np.float64) @ wc.T
    return ImageGrid(round_half_up(out).astype(np.uint8))


def background_mask(image: ImageGrid, t_bg: int) -> BinaryMask:
    """1 where intensity is strictly below the background threshold."""
    return BinaryMask((image.data < t_bg).astype(np.uint8))


def percentile_bounds(image: ImageGrid, mask: BinaryMask, pct_low: float, pct_high: float):
    """Nearest-rank percentiles of the foreground intensity multiset.

    Foreground = pixels where the background mask is 0. Rank for percentile
    p is ceil(p/100 * n), clamped to [1, n].
    """
    if mask.data.shape != image.data.shape:
        raise DimensionMismatchError("mask/image shape mismatch")
    fg = np.sort(image.data[mask.data == 0].ravel())
    if fg.size == 0:
        raise NoForegroundError("background mask covers the entire image")

    def nearest_rank(p):
        rank = int(np.ceil(p / 100.0 * fg.size))
        rank = min(max(rank, 1), fg.size)
        return int(fg[rank - 1])

    return nearest_rank(pct_low), nearest_rank(pct_high)


def linear_stretch(image: ImageGrid, p_low: int, p_high: int) -> ImageGrid:
    """Piecewise-linear stretch of [p_low, p_high] onto [0, 255].

    Degenerate p_low == p_high maps values <= bound to 0 and the rest to 255.
    """
    if p_low > p_high:
        raise ValidationError("p_low must be <= p_high")
    v = image.data.astype(np.float64)
    out = np.empty_like(v)
    if p_low == p_high:
        out = np.where(v <= p_low, 0.0, 255.0)
    else:
        out = round_half_up(255.0 * (v - p_low) / (p_high - p_low))
        out = np.clip(out, 0.0, 255.0)
    return ImageGrid(out.astype(np.uint8))


def _tile_bounds(extent: int, n: int):
    edges = [(i * extent) // n for i in range(n + 1)]
    return list(zip(edges[:-1], edges[1:]))


def clipped_histogram(tile: np.ndarray, clip: float) -> np.ndarray:
    """256-bin histogram clipped at clip*N/256 with uniform excess redistribution."""
    hist = np.bincount(tile.ravel(), minlength=256).astype(np.float64)
    limit = clip * tile.size / 256.0
    excess = np.maximum(hist - limit, 0.0).sum()
    return np.minimum(hist, limit) + excess / 256.0


def _tile_mapping(tile: np.ndarray, clip: float) -> np.ndarray:
    """Per-tile equalization map: value in 0..255 -> equalized value (float)."""
    cdf = np.cumsum(clipped_histogram(tile, clip))
    cdf_min = cdf[0]
    cdf_max = cdf[-1]
    if cdf_max == cdf_min:
        return np.arange(256, dtype=np.float64)
    return (cdf - cdf_min) / (cdf_max - cdf_min) * 255.0


def clahe(image: ImageGrid, clip: float = 2.0, tile_grid: tuple = (8, 8)) -> ImageGrid:
    """Contrast-limited tile-wise equalization with bilinear blending.

    Each pixel is mapped through the equalization tables of the four
    surrounding tiles and blended bilinearly; edge pixels clamp to the
    nearest tile center.
    """
    rows, cols = tile_grid
    h, w = image.data.shape
    if rows > h or cols > w:
        raise TileTooLargeError(f"tile grid {rows}x{cols} does not fit {h}x{w}")

    ybounds = _tile_bounds(h, rows)
    xbounds = _tile_bounds(w, cols)
    maps = np.empty((rows, cols, 256), dtype=np.float64)
    for i, (y0, y1) in enumerate(ybounds):
        for j, (x0, x1) in enumerate(xbounds):
            maps[i, j] = _tile_mapping(image.data[y0:y1, x0:x1], clip)

    cy = np.array([(y0 + y1 - 1) / 2.0 for y0, y1 in ybounds])
    cx = np.array([(x0 + x1 - 1) / 2.0 for x0, x1 in xbounds])

    def axis_blend(coords, centers):
        # index of lower tile and fractional weight toward the upper tile
        i1 = np.searchsorted(centers, coords, side="right")
        i0 = np.clip(i1 - 1, 0, len(centers) - 1)
        i1 = np.clip(i1, 0, len(centers) - 1)
        denom = centers[i1] - centers[i0]
        t = np.where(denom > 0, (coords - centers[i0]) / np.where(denom > 0, denom, 1.0), 0.0)
        return i0, i1, np.clip(t, 0.0, 1.0)

    ry0, ry1, ty = axis_blend(np.arange(h, dtype=np.float64), cy)
    cx0, cx1, tx = axis_blend(np.arange(w, dtype=np.float64), cx)

    v = image.data
    m00 = maps[ry0[:, None], cx0[None, :], v]
    m01 = maps[ry0[:, None], cx1[None, :], v]
    m10 = maps[ry1[:, None], cx0[None, :], v]
    m11 = maps[ry1[:, None], cx1[None, :], v]
    ty = ty[:, None]
    tx = tx[None, :]
    out = (1 - ty) * ((1 - tx) * m00 + tx * m01) + ty * ((1 - tx) * m10 + tx * m11)
    return ImageGrid(round_half_up(out).astype(np.uint8))


def enhance(image: ImageGrid, cfg: PreprocessConfig = PreprocessConfig()) -> ImageGrid:
    """Full pipeline; background pixels stay bit-identical to the resized input."""
    if image.channels == 3:
        image = to_grayscale(image)
    image = resize_area(image, cfg.target_size)
    mask = background_mask(image, cfg.t_bg)
    if mask.count() == mask.data.size:
        # nothing to enhance: the selective blend keeps the original everywhere
        return image
    p_low, p_high = percentile_bounds(image, mask, cfg.pct_low, cfg.pct_high)
    stretched = linear_stretch(image, p_low, p_high)
    equalized = clahe(stretched, cfg.clahe_clip, cfg.tile_grid)
    blended = np.where(mask.data == 0, equalized.data, image.data)
    return ImageGrid(blended.astype(np.uint8))
