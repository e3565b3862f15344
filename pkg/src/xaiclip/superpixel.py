"""Graph-based superpixel segmentation and ROI restriction.

Classic Felzenszwalb-Huttenlocher construction: Gaussian pre-smooth,
8-connected grid graph with absolute intensity differences as edge weights,
union-find merging under the adaptive threshold scale/|C|, then a post-merge
pass that absorbs components smaller than min_size. Edge ties are broken by
(weight, source index, target index) so the result is fully deterministic.
"""

from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.ndimage import gaussian_filter

from .errors import DimensionMismatchError, ValidationError
from .types import BinaryMask, ImageGrid


@dataclass(frozen=True)
class FelzConfig:
    scale: float = 100.0
    sigma: float = 0.5
    min_size: int = 50

    def __post_init__(self):
        if self.scale <= 0:
            raise ValidationError("scale must be positive")
        if self.sigma < 0:
            raise ValidationError("sigma must be non-negative")
        if self.min_size < 1:
            raise ValidationError("min_size must be >= 1")


@dataclass(frozen=True)
class LabelMap:
    """Row-major non-negative labels; 0 marks pixels outside the ROI."""

    labels: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.labels)
        if a.ndim != 2:
            raise DimensionMismatchError("labels must be 2-D")
        a = a.astype(np.int32, copy=True)
        if a.size and a.min() < 0:
            raise ValidationError("labels must be non-negative")
        a.flags.writeable = False
        object.__setattr__(self, "labels", a)

    @property
    def width(self):
        return self.labels.shape[1]

    @property
    def height(self):
        return self.labels.shape[0]

    @property
    def n_labels(self):
        """Number of positive labels (assumes contiguous 1..K labeling)."""
        return int(self.labels.max())


def grid_edges_8(h: int, w: int):
    """8-connectivity edges (a, b) with a < b, in deterministic order."""
    idx = np.arange(h * w, dtype=np.int64).reshape(h, w)
    pairs = []
    pairs.append((idx[:, :-1].ravel(), idx[:, 1:].ravel()))       # right
    pairs.append((idx[:-1, :].ravel(), idx[1:, :].ravel()))       # down
    pairs.append((idx[:-1, :-1].ravel(), idx[1:, 1:].ravel()))    # down-right
    pairs.append((idx[:-1, 1:].ravel(), idx[1:, :-1].ravel()))    # down-left
    a = np.concatenate([p[0] for p in pairs])
    b = np.concatenate([p[1] for p in pairs])
    return a, b


@njit(cache=True)
def _find(parent, x):
    root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        parent[x], x = root, parent[x]
    return root


@njit(cache=True)
def _merge_pass(order, ea, eb, ew, n, scale):
    parent = np.arange(n, dtype=np.int64)
    size = np.ones(n, dtype=np.int64)
    internal = np.zeros(n, dtype=np.float64)
    for k in order:
        ra = _find(parent, ea[k])
        rb = _find(parent, eb[k])
        if ra == rb:
            continue
        w = ew[k]
        if w <= internal[ra] + scale / size[ra] and w <= internal[rb] + scale / size[rb]:
            parent[rb] = ra
            size[ra] += size[rb]
            internal[ra] = w
    return parent, size


@njit(cache=True)
def _min_size_pass(order, ea, eb, parent, size, min_size):
    for k in order:
        ra = _find(parent, ea[k])
        rb = _find(parent, eb[k])
        if ra == rb:
            continue
        if size[ra] < min_size or size[rb] < min_size:
            parent[rb] = ra
            size[ra] += size[rb]


@njit(cache=True)
def _relabel_roots(parent):
    n = parent.shape[0]
    out = np.zeros(n, dtype=np.int32)
    next_label = 1
    for i in range(n):
        r = _find(parent, i)
        if out[r] == 0:
            out[r] = next_label
            next_label += 1
        out[i] = out[r]
    return out


def felzenszwalb(image: ImageGrid, cfg: FelzConfig = FelzConfig()) -> LabelMap:
    """Segment a grayscale image; labels are 1..K in row-major first appearance."""
    if image.channels != 1:
        raise DimensionMismatchError("felzenszwalb expects a grayscale image")
    h, w = image.data.shape
    smoothed = image.data.astype(np.float64)
    if cfg.sigma > 0:
        smoothed = gaussian_filter(smoothed, cfg.sigma, mode="nearest")

    ea, eb = grid_edges_8(h, w)
    flat = smoothed.ravel()
    ew = np.abs(flat[ea] - flat[eb])
    order = np.lexsort((eb, ea, ew))

    parent, size = _merge_pass(order, ea, eb, ew, h * w, cfg.scale)
    _min_size_pass(order, ea, eb, parent, size, cfg.min_size)
    labels = _relabel_roots(parent).reshape(h, w)
    return LabelMap(labels)


@njit(cache=True)
def _relabel_components_4(masked):
    """4-connected components of equal nonzero values, relabeled 1..K row-major."""
    h, w = masked.shape
    n = h * w
    parent = np.arange(n, dtype=np.int64)
    for y in range(h):
        for x in range(w):
            v = masked[y, x]
            if v == 0:
                continue
            i = y * w + x
            if x + 1 < w and masked[y, x + 1] == v:
                ra = _find(parent, i)
                rb = _find(parent, i + 1)
                if ra != rb:
                    parent[rb] = ra
            if y + 1 < h and masked[y + 1, x] == v:
                ra = _find(parent, i)
                rb = _find(parent, i + w)
                if ra != rb:
                    parent[rb] = ra
    flat = masked.ravel()
    out = np.zeros(n, dtype=np.int32)
    next_label = 1
    for i in range(n):
        if flat[i] == 0:
            continue
        r = _find(parent, i)
        if out[r] == 0:
            out[r] = next_label
            next_label += 1
        out[i] = out[r]
    return out.reshape(h, w)


def restrict_to_roi(labels: LabelMap, roi: BinaryMask) -> LabelMap:
    """Zero labels outside the ROI and relabel survivors 1..K row-major.

    Segments cut by the ROI boundary are re-split into 4-connected components
    before relabeling.
    """
    if (labels.height, labels.width) != (roi.height, roi.width):
        raise DimensionMismatchError("label map and ROI dimensions differ")
    masked = np.where(roi.data == 1, labels.labels, 0).astype(np.int32)
    return LabelMap(_relabel_components_4(masked))
